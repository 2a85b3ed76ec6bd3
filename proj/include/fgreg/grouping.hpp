#pragma once
// Feature adjacency graphs, recursive nearest agglomeration, and conversion of
// partitions into grouping matrices.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fgreg/error.hpp"
#include "fgreg/numkit.hpp"

namespace fgreg {

// ---------------------------------------------------------------------------
// Partition
// ---------------------------------------------------------------------------

/// Disjoint cover of the p features by k nonempty clusters.
class Partition {
public:
    Partition() = default;

    /// Cluster ids must cover [0, k) with no empty cluster.
    explicit Partition(std::vector<std::uint32_t> assign) : assign_(std::move(assign)) {
        detail::require(!assign_.empty(), "Partition: no features");
        const auto k = static_cast<std::size_t>(*std::max_element(assign_.begin(), assign_.end())) + 1;
        sizes_.assign(k, 0);
        for (auto c : assign_) ++sizes_[c];
        for (std::size_t q = 0; q < k; ++q)
            detail::require(sizes_[q] > 0, "Partition: cluster " + std::to_string(q) + " is empty");
    }

    static Partition singletons(std::size_t p) {
        std::vector<std::uint32_t> a(p);
        std::iota(a.begin(), a.end(), 0u);
        return Partition(std::move(a));
    }

    /// Build from explicit clusters (lists of feature indices).
    static Partition from_clusters(const std::vector<std::vector<std::size_t>>& clusters, std::size_t p) {
        std::vector<std::uint32_t> a(p, kDroppedColumn);
        for (std::size_t q = 0; q < clusters.size(); ++q)
            for (auto j : clusters[q]) {
                detail::require(j < p, "Partition: feature index out of range");
                detail::require(a[j] == kDroppedColumn, "Partition: clusters overlap");
                a[j] = static_cast<std::uint32_t>(q);
            }
        for (auto c : a) detail::require(c != kDroppedColumn, "Partition: clusters do not cover all features");
        return Partition(std::move(a));
    }

    std::size_t p() const noexcept { return assign_.size(); }
    std::size_t k() const noexcept { return sizes_.size(); }
    std::span<const std::uint32_t> assign() const noexcept { return assign_; }
    std::span<const std::size_t> sizes() const noexcept { return sizes_; }

    std::vector<std::vector<std::size_t>> clusters() const {
        std::vector<std::vector<std::size_t>> out(k());
        for (std::size_t j = 0; j < assign_.size(); ++j) out[assign_[j]].push_back(j);
        return out;
    }

    friend bool operator==(const Partition&, const Partition&) = default;

private:
    std::vector<std::uint32_t> assign_;
    std::vector<std::size_t> sizes_;
};

// ---------------------------------------------------------------------------
// FeatureGraph
// ---------------------------------------------------------------------------

/// Undirected simple graph over feature indices, stored as sorted adjacency.
class FeatureGraph {
public:
    FeatureGraph() = default;

    /// Self-loops are rejected; duplicates and orientation are normalized.
    FeatureGraph(std::size_t p, std::vector<std::pair<std::size_t, std::size_t>> edges,
                 std::vector<std::size_t> dims = {})
        : p_(p), dims_(std::move(dims)) {
        for (auto& [u, v] : edges) {
            detail::require(u < p && v < p, "FeatureGraph: node id out of range");
            detail::require(u != v, "FeatureGraph: self-loop");
            if (u > v) std::swap(u, v);
        }
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        edges_ = std::move(edges);

        offsets_.assign(p + 1, 0);
        for (auto [u, v] : edges_) {
            ++offsets_[u + 1];
            ++offsets_[v + 1];
        }
        std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
        neighbors_.resize(offsets_.back());
        auto fill = offsets_;
        for (auto [u, v] : edges_) {
            neighbors_[fill[u]++] = v;
            neighbors_[fill[v]++] = u;
        }
        for (std::size_t j = 0; j < p; ++j)
            std::sort(neighbors_.begin() + static_cast<std::ptrdiff_t>(offsets_[j]),
                      neighbors_.begin() + static_cast<std::ptrdiff_t>(offsets_[j + 1]));
    }

    std::size_t p() const noexcept { return p_; }
    std::size_t edge_count() const noexcept { return edges_.size(); }
    /// Edges (u, v) with u < v, lexicographically sorted.
    const std::vector<std::pair<std::size_t, std::size_t>>& edges() const noexcept { return edges_; }
    /// Grid dimensions, empty for an explicit edge list.
    const std::vector<std::size_t>& dims() const noexcept { return dims_; }

    std::span<const std::size_t> neighbors(std::size_t j) const noexcept {
        return {neighbors_.data() + offsets_[j], offsets_[j + 1] - offsets_[j]};
    }

    /// Component id per node, numbered in order of first node.
    std::vector<std::size_t> components(std::size_t* count = nullptr) const {
        constexpr auto unseen = static_cast<std::size_t>(-1);
        std::vector<std::size_t> comp(p_, unseen);
        std::vector<std::size_t> stack;
        std::size_t n = 0;
        for (std::size_t s = 0; s < p_; ++s) {
            if (comp[s] != unseen) continue;
            comp[s] = n;
            stack.push_back(s);
            while (!stack.empty()) {
                const auto u = stack.back();
                stack.pop_back();
                for (auto v : neighbors(u))
                    if (comp[v] == unseen) {
                        comp[v] = n;
                        stack.push_back(v);
                    }
            }
            ++n;
        }
        if (count) *count = n;
        return comp;
    }

    std::size_t component_count() const {
        std::size_t n = 0;
        components(&n);
        return n;
    }

private:
    std::size_t p_ = 0;
    std::vector<std::size_t> dims_;
    std::vector<std::pair<std::size_t, std::size_t>> edges_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> neighbors_;
};

/// Lattice graph over a 1D, 2D or 3D grid (row-major, last dim fastest):
/// 2-, 4- or 6-neighborhood respectively.
inline FeatureGraph grid_adjacency(const std::vector<std::size_t>& dims) {
    detail::require(!dims.empty() && dims.size() <= 3, "grid_adjacency: grid rank must be 1, 2 or 3");
    for (auto d : dims) detail::require(d >= 1, "grid_adjacency: grid dimensions must be >= 1");
    const std::size_t p = std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());

    std::vector<std::size_t> stride(dims.size(), 1);
    for (std::size_t a = dims.size() - 1; a > 0; --a) stride[a - 1] = stride[a] * dims[a];

    std::vector<std::pair<std::size_t, std::size_t>> edges;
    edges.reserve(p * dims.size());
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t a = 0; a < dims.size(); ++a) {
            const auto coord = (j / stride[a]) % dims[a];
            if (coord + 1 < dims[a]) edges.emplace_back(j, j + stride[a]);
        }
    return FeatureGraph(p, std::move(edges), dims);
}

// ---------------------------------------------------------------------------
// Recursive nearest agglomeration
// ---------------------------------------------------------------------------

struct RenaOptions {
    /// Break exact similarity ties with random priorities drawn from the rng
    /// instead of by smaller cluster id.
    bool random_ties = false;
};

namespace detail {

struct UnionFind {
    std::vector<std::size_t> parent;
    std::size_t sets;

    explicit UnionFind(std::size_t n) : parent(n), sets(n) {
        std::iota(parent.begin(), parent.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (b < a) std::swap(a, b);
        parent[b] = a;
        --sets;
        return true;
    }
};

} // namespace detail

/// Cluster the p features (columns of `samples`, r x p) into exactly k
/// connected clusters of `graph`.
///
/// Each round every cluster links to its nearest graph neighbour (squared
/// Euclidean distance between mean feature profiles over the r samples,
/// ties to the smaller id); the components of that 1-NN graph are merged and
/// the graph is contracted. A round that would overshoot k applies its links
/// one at a time, closest first, and stops at k.
///
/// Cluster ids in the result are ordered by their smallest feature index.
inline Partition rena_cluster(const DenseMatrix& samples, const FeatureGraph& graph, std::size_t k,
                              Rng& rng, const RenaOptions& opts = {}) {
    const std::size_t p = graph.p();
    const std::size_t r = samples.rows();
    detail::require_dims(samples.cols() == p, "rena_cluster: sample width differs from graph size");
    detail::require(r >= 1, "rena_cluster: need at least one sample");
    detail::require(k >= 1, "rena_cluster: k must be >= 1");
    detail::require(k <= p, "rena_cluster: k (" + std::to_string(k) + ") exceeds p (" + std::to_string(p) + ")");
    const auto ncomp = graph.component_count();
    detail::require(k >= ncomp, "rena_cluster: k (" + std::to_string(k) + ") is below the number of connected components (" +
                                    std::to_string(ncomp) + ")");

    if (k == p) return Partition::singletons(p);

    // Cluster-major profile sums: sums[c * r + s].
    std::vector<double> sums(p * r);
    for (std::size_t s = 0; s < r; ++s) {
        auto row = samples.row(s);
        for (std::size_t j = 0; j < p; ++j) sums[j * r + s] = row[j];
    }
    std::vector<double> sizes(p, 1.0);
    std::vector<std::size_t> label(p);
    std::iota(label.begin(), label.end(), std::size_t{0});
    auto edges = graph.edges();

    std::vector<double> means;
    std::vector<double> edge_dist;
    std::vector<std::size_t> nn;
    std::vector<double> nn_dist;
    std::vector<std::uint64_t> priority;
    std::size_t n = p;

    while (n > k) {
        means.resize(n * r);
        for (std::size_t c = 0; c < n; ++c) {
            const double inv = 1.0 / sizes[c];
            for (std::size_t s = 0; s < r; ++s) means[c * r + s] = sums[c * r + s] * inv;
        }

        edge_dist.resize(edges.size());
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const double* a = means.data() + edges[e].first * r;
            const double* b = means.data() + edges[e].second * r;
            double d = 0.0;
            for (std::size_t s = 0; s < r; ++s) {
                const double t = a[s] - b[s];
                d += t * t;
            }
            edge_dist[e] = d;
        }

        if (opts.random_ties) {
            priority.resize(n);
            for (auto& v : priority) v = rng.next_u64();
        }
        auto tie_key = [&](std::size_t c) -> std::uint64_t { return opts.random_ties ? priority[c] : c; };

        constexpr auto none = static_cast<std::size_t>(-1);
        nn.assign(n, none);
        nn_dist.assign(n, 0.0);
        auto offer = [&](std::size_t c, std::size_t other, double d) {
            if (nn[c] == none || d < nn_dist[c] || (d == nn_dist[c] && tie_key(other) < tie_key(nn[c]))) {
                nn[c] = other;
                nn_dist[c] = d;
            }
        };
        for (std::size_t e = 0; e < edges.size(); ++e) {
            offer(edges[e].first, edges[e].second, edge_dist[e]);
            offer(edges[e].second, edges[e].first, edge_dist[e]);
        }

        // Symmetrized 1-NN links, deduplicated.
        std::vector<std::tuple<double, std::size_t, std::size_t>> links;
        links.reserve(n);
        for (std::size_t c = 0; c < n; ++c) {
            if (nn[c] == none) continue;
            const auto u = std::min(c, nn[c]);
            const auto v = std::max(c, nn[c]);
            if (c == v && nn[u] == v) continue;  // mutual pair, recorded from u
            links.emplace_back(nn_dist[c], u, v);
        }

        detail::UnionFind uf(n);
        for (auto& [d, u, v] : links) uf.unite(u, v);
        if (uf.sets < k) {
            std::sort(links.begin(), links.end(), [&](const auto& a, const auto& b) {
                if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
                const auto ka = std::make_pair(tie_key(std::get<1>(a)), tie_key(std::get<2>(a)));
                const auto kb = std::make_pair(tie_key(std::get<1>(b)), tie_key(std::get<2>(b)));
                return ka < kb;
            });
            uf = detail::UnionFind(n);
            for (auto& [d, u, v] : links) {
                uf.unite(u, v);
                if (uf.sets == k) break;
            }
        }

        // Relabel in order of smallest member id.
        std::vector<std::size_t> relabel(n, none);
        std::vector<std::size_t> root_label(n, none);
        std::size_t next = 0;
        for (std::size_t c = 0; c < n; ++c) {
            const auto root = uf.find(c);
            if (root_label[root] == none) root_label[root] = next++;
            relabel[c] = root_label[root];
        }

        std::vector<double> new_sums(next * r, 0.0);
        std::vector<double> new_sizes(next, 0.0);
        for (std::size_t c = 0; c < n; ++c) {
            const auto t = relabel[c];
            new_sizes[t] += sizes[c];
            for (std::size_t s = 0; s < r; ++s) new_sums[t * r + s] += sums[c * r + s];
        }
        sums = std::move(new_sums);
        sizes = std::move(new_sizes);

        std::vector<std::pair<std::size_t, std::size_t>> contracted;
        contracted.reserve(edges.size());
        for (auto [u, v] : edges) {
            auto a = relabel[u], b = relabel[v];
            if (a == b) continue;
            if (a > b) std::swap(a, b);
            contracted.emplace_back(a, b);
        }
        std::sort(contracted.begin(), contracted.end());
        contracted.erase(std::unique(contracted.begin(), contracted.end()), contracted.end());
        edges = std::move(contracted);

        for (auto& l : label) l = relabel[l];
        n = next;
    }

    std::vector<std::uint32_t> assign(label.begin(), label.end());
    return Partition(std::move(assign));
}

/// Every cluster induces a connected subgraph of `graph`.
inline bool clusters_connected(const Partition& part, const FeatureGraph& graph) {
    detail::require_dims(part.p() == graph.p(), "clusters_connected: size mismatch");
    const auto assign = part.assign();
    std::vector<bool> seen(part.p(), false);
    std::vector<bool> cluster_done(part.k(), false);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < part.p(); ++s) {
        const auto c = assign[s];
        if (cluster_done[c]) {
            if (!seen[s]) return false;  // reached a second component of c
            continue;
        }
        cluster_done[c] = true;
        seen[s] = true;
        stack.push_back(s);
        while (!stack.empty()) {
            const auto u = stack.back();
            stack.pop_back();
            for (auto v : graph.neighbors(u))
                if (!seen[v] && assign[v] == c) {
                    seen[v] = true;
                    stack.push_back(v);
                }
        }
    }
    return true;
}

/// Grouping matrix with alpha_q = 1/sqrt(|C_q|) on the members of cluster q.
inline SparseGrouping partition_to_phi(const Partition& part) {
    std::vector<double> alpha(part.k());
    for (std::size_t q = 0; q < part.k(); ++q) alpha[q] = 1.0 / std::sqrt(static_cast<double>(part.sizes()[q]));
    std::vector<std::uint32_t> rows(part.assign().begin(), part.assign().end());
    std::vector<double> vals(part.p());
    for (std::size_t j = 0; j < part.p(); ++j) vals[j] = alpha[rows[j]];
    return SparseGrouping(part.k(), std::move(rows), std::move(vals));
}

/// 20% of the features, rounded, clamped to [1, p].
inline std::size_t default_k(std::size_t p) {
    detail::require(p >= 1, "default_k: p must be >= 1");
    const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(p) / 5.0));
    return std::clamp<std::size_t>(k, 1, p);
}

// ---------------------------------------------------------------------------
// Partition text format: header "p,k", then "feature_index,cluster_id".
// ---------------------------------------------------------------------------

inline void write_partition(std::ostream& os, const Partition& part) {
    os << part.p() << ',' << part.k() << '\n';
    for (std::size_t j = 0; j < part.p(); ++j) os << j << ',' << part.assign()[j] << '\n';
}

inline Partition read_partition(std::istream& is) {
    auto parse_pair = [](const std::string& line, std::size_t lineno) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError("partition line " + std::to_string(lineno) + ": expected 'a,b'");
        try {
            std::size_t used_a = 0, used_b = 0;
            const auto a_str = line.substr(0, comma);
            const auto b_str = line.substr(comma + 1);
            const auto a = std::stoull(a_str, &used_a);
            const auto b = std::stoull(b_str, &used_b);
            if (used_a != a_str.size() || used_b != b_str.size() || a_str.empty() || a_str[0] == '-' ||
                b_str.empty() || b_str[0] == '-')
                throw std::invalid_argument("trailing");
            return std::make_pair(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
        } catch (const std::exception&) {
            throw FormatError("partition line " + std::to_string(lineno) + ": not two non-negative integers");
        }
    };
    std::string line;
    if (!std::getline(is, line)) throw FormatError("partition: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto [p, k] = parse_pair(line, 1);
    if (p == 0 || k == 0 || k > p) throw FormatError("partition: invalid header p,k");
    std::vector<std::uint32_t> assign(p, kDroppedColumn);
    std::size_t lineno = 1, count = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto [j, c] = parse_pair(line, lineno);
        if (j >= p || c >= k) throw FormatError("partition line " + std::to_string(lineno) + ": index out of range");
        if (assign[j] != kDroppedColumn) throw FormatError("partition: feature " + std::to_string(j) + " listed twice");
        assign[j] = static_cast<std::uint32_t>(c);
        ++count;
    }
    if (count != p) throw FormatError("partition: expected " + std::to_string(p) + " feature lines, got " + std::to_string(count));
    Partition part;
    try {
        part = Partition(std::move(assign));
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("partition: ") + e.what());
    }
    if (part.k() != k) throw FormatError("partition: header k does not match cluster ids");
    return part;
}

inline void save_partition(const std::string& path, const Partition& part) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_partition(os, part);
    if (!os) throw Error("write failed: '" + path + "'");
}

inline Partition load_partition(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_partition(is);
}

} // namespace fgreg
