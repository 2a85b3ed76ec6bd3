#pragma once
// Banks of grouping matrices, each clustered on a random training subsample.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "fgreg/data.hpp"
#include "fgreg/error.hpp"
#include "fgreg/grouping.hpp"
#include "fgreg/numkit.hpp"

namespace fgreg {

/// When the trainer draws a new matrix from the bank.
enum class BankPolicy { per_minibatch, per_epoch };

inline const char* to_string(BankPolicy p) noexcept {
    return p == BankPolicy::per_epoch ? "per-epoch" : "per-minibatch";
}

inline BankPolicy parse_bank_policy(const std::string& s) {
    if (s == "per-minibatch" || s == "minibatch") return BankPolicy::per_minibatch;
    if (s == "per-epoch" || s == "epoch") return BankPolicy::per_epoch;
    throw InvalidArgument("unknown bank policy '" + s + "' (expected per-minibatch or per-epoch)");
}

/// b grouping matrices sharing (k, p), plus the partitions they came from.
class ProjectionBank {
public:
    ProjectionBank() = default;

    ProjectionBank(std::vector<Partition> partitions, std::size_t r, std::uint64_t source_seed)
        : partitions_(std::move(partitions)), r_(r), source_seed_(source_seed) {
        detail::require(!partitions_.empty(), "ProjectionBank: bank must hold at least one matrix");
        const auto k = partitions_.front().k(), p = partitions_.front().p();
        matrices_.reserve(partitions_.size());
        for (const auto& part : partitions_) {
            detail::require_dims(part.k() == k && part.p() == p, "ProjectionBank: all matrices must share (k, p)");
            matrices_.push_back(partition_to_phi(part));
        }
    }

    std::size_t size() const noexcept { return matrices_.size(); }
    std::size_t k() const noexcept { return matrices_.empty() ? 0 : matrices_.front().k(); }
    std::size_t p() const noexcept { return matrices_.empty() ? 0 : matrices_.front().p(); }
    std::size_t r() const noexcept { return r_; }
    std::uint64_t source_seed() const noexcept { return source_seed_; }

    const std::vector<SparseGrouping>& matrices() const noexcept { return matrices_; }
    const std::vector<Partition>& partitions() const noexcept { return partitions_; }
    const SparseGrouping& operator[](std::size_t i) const { return matrices_.at(i); }

    friend bool operator==(const ProjectionBank&, const ProjectionBank&) = default;

private:
    std::vector<Partition> partitions_;
    std::vector<SparseGrouping> matrices_;
    std::size_t r_ = 0;
    std::uint64_t source_seed_ = 0;
};

/// Cluster b independent subsamples of r training rows (without replacement
/// within a subsample) into k groups each. Subsamples are drawn sequentially
/// from `rng` before clustering, so the result does not depend on `threads`.
inline ProjectionBank build_bank(const Dataset& train, const FeatureGraph& graph, std::size_t k, std::size_t r,
                                 std::size_t b, Rng& rng, unsigned threads = 1) {
    detail::require(b >= 1, "build_bank: b must be >= 1");
    detail::require(r >= 1, "build_bank: r must be >= 1");
    detail::require(r <= train.n(), "build_bank: r (" + std::to_string(r) + ") exceeds the number of training samples (" +
                                        std::to_string(train.n()) + ")");
    detail::require_dims(graph.p() == train.p(), "build_bank: graph size differs from feature count");
    detail::require(k >= 1 && k <= train.p(), "build_bank: k must be in [1, p]");

    std::vector<std::vector<std::size_t>> subsamples(b);
    for (auto& s : subsamples) {
        s = sample_without_replacement(train.n(), r, rng);
        std::sort(s.begin(), s.end());
    }
    const auto seed = rng.seed();
    std::vector<Partition> parts(b);
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Rng local = Rng(seed).split(i);
            parts[i] = rena_cluster(train.subset(subsamples[i]).X, graph, k, local);
        }
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(b)));
    if (threads == 1) {
        work(0, b);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (b + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            const auto begin = std::min<std::size_t>(b, t * chunk);
            const auto end = std::min<std::size_t>(b, begin + chunk);
            if (begin < end) pool.emplace_back(work, begin, end);
        }
    }
    return ProjectionBank(std::move(parts), r, seed);
}

/// Uniform draw with replacement.
inline const SparseGrouping& draw(const ProjectionBank& bank, Rng& rng) {
    detail::require(bank.size() > 0, "draw: empty bank");
    return bank.matrices()[rng.below(bank.size())];
}

// ---------------------------------------------------------------------------
// Directory format: manifest.txt (key=value lines b, r, k, p, seed) plus one
// partition file per matrix, partition_00000.csv ...
// ---------------------------------------------------------------------------

inline std::string bank_member_filename(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "partition_%05zu.csv", i);
    return buf;
}

inline void save_bank(const std::string& dir, const ProjectionBank& bank) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream m(fs::path(dir) / "manifest.txt");
        if (!m) throw Error("cannot write bank manifest in '" + dir + "'");
        m << "b=" << bank.size() << "\nr=" << bank.r() << "\nk=" << bank.k() << "\np=" << bank.p()
          << "\nseed=" << bank.source_seed() << '\n';
    }
    for (std::size_t i = 0; i < bank.size(); ++i)
        save_partition((fs::path(dir) / bank_member_filename(i)).string(), bank.partitions()[i]);
}

inline ProjectionBank load_bank(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream m(fs::path(dir) / "manifest.txt");
    if (!m) throw Error("cannot open bank manifest in '" + dir + "'");
    std::map<std::string, std::uint64_t> kv;
    std::string line;
    while (std::getline(m, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("bank manifest: expected key=value, got '" + line + "'");
        try {
            kv[line.substr(0, eq)] = std::stoull(line.substr(eq + 1));
        } catch (const std::exception&) {
            throw FormatError("bank manifest: non-integer value in '" + line + "'");
        }
    }
    for (const char* key : {"b", "r", "k", "p", "seed"})
        if (!kv.count(key)) throw FormatError(std::string("bank manifest: missing key '") + key + "'");
    std::vector<Partition> parts;
    parts.reserve(kv["b"]);
    for (std::size_t i = 0; i < kv["b"]; ++i) {
        parts.push_back(load_partition((fs::path(dir) / bank_member_filename(i)).string()));
        if (parts.back().k() != kv["k"] || parts.back().p() != kv["p"])
            throw FormatError("bank member " + std::to_string(i) + " does not match manifest k/p");
    }
    if (parts.empty()) throw FormatError("bank manifest: b must be >= 1");
    return ProjectionBank(std::move(parts), kv["r"], kv["seed"]);
}

} // namespace fgreg
