#pragma once
// Datasets: storage formats, additive noise, stratified splitting and the
// synthetic structured-image generator.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fgreg/error.hpp"
#include "fgreg/numkit.hpp"

namespace fgreg {

/// n samples of p features with labels in [0, l) and grid geometry.
struct Dataset {
    DenseMatrix X;
    std::vector<std::uint32_t> y;
    std::vector<std::size_t> dims;
    std::size_t classes = 0;

    std::size_t n() const noexcept { return X.rows(); }
    std::size_t p() const noexcept { return X.cols(); }

    /// Throws InvalidArgument when an invariant is broken.
    void validate() const {
        detail::require(n() >= 1, "Dataset: no samples");
        detail::require(y.size() == n(), "Dataset: label count differs from sample count");
        detail::require(classes >= 1, "Dataset: class count must be >= 1");
        for (std::size_t i = 0; i < y.size(); ++i)
            detail::require(y[i] < classes, "Dataset: label " + std::to_string(y[i]) + " at sample " + std::to_string(i) +
                                                " is outside [0," + std::to_string(classes) + ")");
        const auto prod = std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
        detail::require(!dims.empty() && prod == p(), "Dataset: geometry does not match feature count");
        detail::require(X.all_finite(), "Dataset: non-finite feature value");
    }

    /// Rows `idx` (in the given order) as a new dataset with the same geometry.
    Dataset subset(std::span<const std::size_t> idx) const {
        Dataset out;
        out.X = DenseMatrix(idx.size(), p());
        out.y.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto src = X.row(idx[i]);
            std::copy(src.begin(), src.end(), out.X.row(i).begin());
            out.y[i] = y[idx[i]];
        }
        out.dims = dims;
        out.classes = classes;
        return out;
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

// ---------------------------------------------------------------------------
// CSV: one sample per row, last column is the integer label. An optional first
// line "# dims=64x64 classes=40" declares geometry and class count.
// ---------------------------------------------------------------------------

struct CsvOptions {
    std::size_t classes = 0;          ///< 0: infer as max label + 1 (or header)
    std::vector<std::size_t> dims;    ///< empty: header, else 1D
    bool standardize = false;         ///< z-score every feature column
};

namespace detail {

inline std::vector<std::size_t> parse_dims(std::string_view s) {
    std::vector<std::size_t> dims;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto end = s.find('x', start);
        if (end == std::string_view::npos) end = s.size();
        const auto tok = s.substr(start, end - start);
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc{} || ptr != tok.data() + tok.size() || tok.empty() || v == 0)
            throw FormatError("invalid grid dims '" + std::string(s) + "'");
        dims.push_back(v);
        start = end + 1;
    }
    if (dims.empty() || dims.size() > 3) throw FormatError("grid dims must have rank 1..3");
    return dims;
}

inline std::string format_dims(const std::vector<std::size_t>& dims) {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
    return s;
}

inline void standardize_columns(DenseMatrix& X) {
    const auto n = X.rows();
    for (std::size_t j = 0; j < X.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += X(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (X(i, j) - mean) * (X(i, j) - mean);
        const double sd = std::sqrt(var / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) X(i, j) = sd > 0.0 ? (X(i, j) - mean) / sd : 0.0;
    }
}

} // namespace detail

inline Dataset read_csv(std::istream& is, const CsvOptions& opts = {}) {
    std::vector<double> values;
    std::vector<std::uint32_t> labels;
    std::size_t width = 0, lineno = 0;
    std::size_t header_classes = 0;
    std::vector<std::size_t> header_dims;
    std::string line;

    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream meta(line.substr(1));
            std::string kv;
            while (meta >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) continue;
                const auto key = kv.substr(0, eq), val = kv.substr(eq + 1);
                if (key == "dims") header_dims = detail::parse_dims(val);
                else if (key == "classes") {
                    auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), header_classes);
                    if (ec != std::errc{} || ptr != val.data() + val.size())
                        throw FormatError("csv line " + std::to_string(lineno) + ": bad classes value");
                }
            }
            continue;
        }
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() < 2)
            throw FormatError("csv line " + std::to_string(lineno) + ": need at least one feature and a label");
        if (width == 0) width = fields.size();
        if (fields.size() != width)
            throw FormatError("csv line " + std::to_string(lineno) + ": ragged row (" + std::to_string(fields.size()) +
                              " fields, expected " + std::to_string(width) + ")");
        for (std::size_t f = 0; f + 1 < fields.size(); ++f) {
            auto tok = fields[f];
            while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
            while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc{} || ptr != tok.data() + tok.size() || tok.empty())
                throw FormatError("csv line " + std::to_string(lineno) + ", column " + std::to_string(f + 1) +
                                  ": non-numeric value '" + std::string(tok) + "'");
            if (!std::isfinite(v))
                throw FormatError("csv line " + std::to_string(lineno) + ", column " + std::to_string(f + 1) +
                                  ": non-finite value");
            values.push_back(v);
        }
        auto tok = fields.back();
        while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
        while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
        std::uint32_t lab = 0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), lab);
        if (ec != std::errc{} || ptr != tok.data() + tok.size() || tok.empty())
            throw FormatError("csv line " + std::to_string(lineno) + ": label '" + std::string(tok) +
                              "' is not a non-negative integer");
        labels.push_back(lab);
    }
    if (labels.empty()) throw FormatError("csv: no samples");

    Dataset ds;
    const auto p = width - 1;
    ds.X = DenseMatrix(labels.size(), p, std::move(values));
    ds.y = std::move(labels);
    const auto max_label = *std::max_element(ds.y.begin(), ds.y.end());
    ds.classes = opts.classes ? opts.classes : header_classes ? header_classes : std::size_t{max_label} + 1;
    ds.dims = !opts.dims.empty() ? opts.dims : !header_dims.empty() ? header_dims : std::vector<std::size_t>{p};
    if (max_label >= ds.classes)
        throw FormatError("csv: label " + std::to_string(max_label) + " outside declared class range [0," +
                          std::to_string(ds.classes) + ")");
    const auto prod = std::accumulate(ds.dims.begin(), ds.dims.end(), std::size_t{1}, std::multiplies<>());
    if (prod != p) throw FormatError("csv: grid " + detail::format_dims(ds.dims) + " does not match " + std::to_string(p) + " features");
    if (opts.standardize) detail::standardize_columns(ds.X);
    return ds;
}

inline void write_csv(std::ostream& os, const Dataset& ds) {
    os << "# dims=" << detail::format_dims(ds.dims) << " classes=" << ds.classes << '\n';
    std::array<char, 32> buf{};
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (auto v : ds.X.row(i)) {
            auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);  // shortest round-trip
            os.write(buf.data(), ptr - buf.data());
            os << ',';
        }
        os << ds.y[i] << '\n';
    }
}

inline Dataset load_csv(const std::string& path, const CsvOptions& opts = {}) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_csv(is, opts);
}

inline void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_csv(os, ds);
}

// ---------------------------------------------------------------------------
// Binary little-endian I/O helpers.
// ---------------------------------------------------------------------------

namespace detail {

template <class U>
void put_le(std::ostream& os, U v) {
    static_assert(std::is_unsigned_v<U>);
    std::array<char, sizeof(U)> b{};
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), b.size());
}

inline void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }

template <class U>
U get_le(std::istream& is, const char* what) {
    std::array<unsigned char, sizeof(U)> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), b.size()))
        throw FormatError(std::string("truncated file while reading ") + what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
    return v;
}

inline double get_f64(std::istream& is, const char* what) {
    return std::bit_cast<double>(get_le<std::uint64_t>(is, what));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
    std::array<char, 4> b{};
    if (!is.read(b.data(), 4)) throw FormatError("truncated file: missing magic");
    if (std::string_view(b.data(), 4) != magic)
        throw FormatError("bad magic: expected '" + std::string(magic) + "'");
}

} // namespace detail

// FGRD layout: magic, u32 version=1, u64 n, u64 p, u32 l, u32 rank,
// rank x u64 dims, n*p f64 row-major, n u32 labels.
inline constexpr std::uint32_t kDatasetBinVersion = 1;

inline void write_bin(std::ostream& os, const Dataset& ds) {
    os.write("FGRD", 4);
    detail::put_le<std::uint32_t>(os, kDatasetBinVersion);
    detail::put_le<std::uint64_t>(os, ds.n());
    detail::put_le<std::uint64_t>(os, ds.p());
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.classes));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.dims.size()));
    for (auto d : ds.dims) detail::put_le<std::uint64_t>(os, d);
    for (auto v : ds.X.data()) detail::put_f64(os, v);
    for (auto lab : ds.y) detail::put_le<std::uint32_t>(os, lab);
}

inline Dataset read_bin(std::istream& is) {
    detail::expect_magic(is, "FGRD");
    const auto version = detail::get_le<std::uint32_t>(is, "version");
    if (version != kDatasetBinVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
    const auto n = detail::get_le<std::uint64_t>(is, "n");
    const auto p = detail::get_le<std::uint64_t>(is, "p");
    const auto l = detail::get_le<std::uint32_t>(is, "l");
    const auto rank = detail::get_le<std::uint32_t>(is, "rank");
    if (n == 0 || p == 0 || l == 0) throw FormatError("dataset header has a zero size");
    if (rank == 0 || rank > 3) throw FormatError("dataset geometry rank must be 1..3");
    if (n > (std::uint64_t{1} << 40) / p) throw FormatError("dataset header sizes are implausibly large");
    Dataset ds;
    ds.classes = l;
    for (std::uint32_t a = 0; a < rank; ++a) ds.dims.push_back(detail::get_le<std::uint64_t>(is, "dims"));
    std::vector<double> values(n * p);
    for (auto& v : values) {
        v = detail::get_f64(is, "features");
        if (!std::isfinite(v)) throw FormatError("dataset contains a non-finite feature");
    }
    ds.X = DenseMatrix(n, p, std::move(values));
    ds.y.resize(n);
    for (auto& lab : ds.y) lab = detail::get_le<std::uint32_t>(is, "labels");
    try {
        ds.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(e.what());
    }
    return ds;
}

inline void save_bin(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_bin(os, ds);
    if (!os) throw Error("write failed: '" + path + "'");
}

inline Dataset load_bin(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_bin(is);
}

/// Dispatch on extension: ".csv" text, anything else FGRD binary.
inline Dataset load_dataset(const std::string& path, const CsvOptions& opts = {}) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return load_csv(path, opts);
    auto ds = load_bin(path);
    if (opts.standardize) detail::standardize_columns(ds.X);
    return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) save_csv(path, ds);
    else save_bin(path, ds);
}

// ---------------------------------------------------------------------------
// Noise, splitting, synthesis
// ---------------------------------------------------------------------------

struct NoiseSpec {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

/// X + N(0, sigma^2) i.i.d., unclamped.
inline Dataset add_noise(const Dataset& ds, const NoiseSpec& spec) {
    detail::require(spec.sigma >= 0.0 && std::isfinite(spec.sigma), "add_noise: sigma must be >= 0");
    Dataset out = ds;
    if (spec.sigma == 0.0) return out;
    Rng rng(spec.seed, 0x6E6F697365ULL);
    for (auto& v : out.X.data()) v += spec.sigma * rng.normal();
    return out;
}

/// Stratified split. The test set receives round(fraction * n) samples,
/// apportioned across classes by largest remainder (ties in random order),
/// with at least one train and one test sample per class.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction, Rng& rng) {
    detail::require(test_fraction > 0.0 && test_fraction < 1.0, "split: test fraction must be in (0,1)");
    std::vector<std::vector<std::size_t>> by_class(ds.classes);
    for (std::size_t i = 0; i < ds.n(); ++i) by_class[ds.y[i]].push_back(i);

    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < ds.classes; ++c) {
        if (by_class[c].empty()) continue;
        detail::require(by_class[c].size() >= 2,
                        "split: class " + std::to_string(c) + " has fewer than 2 samples");
        present.push_back(c);
    }

    std::vector<std::size_t> quota(ds.classes, 0);
    std::vector<double> remainder(ds.classes, 0.0);
    std::size_t assigned = 0;
    for (auto c : present) {
        const double exact = test_fraction * static_cast<double>(by_class[c].size());
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        remainder[c] = exact - static_cast<double>(quota[c]);
        assigned += quota[c];
    }
    const auto target = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.n())));
    std::vector<std::size_t> order = present;
    rng.shuffle(std::span<std::size_t>(order));
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
    for (std::size_t t = 0; assigned < target && t < order.size(); ++t, ++assigned) ++quota[order[t]];
    for (auto c : present) quota[c] = std::clamp<std::size_t>(quota[c], 1, by_class[c].size() - 1);

    std::vector<std::size_t> train_idx, test_idx;
    for (auto c : present) {
        auto members = by_class[c];
        rng.shuffle(std::span<std::size_t>(members));
        test_idx.insert(test_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
        train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]), members.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {ds.subset(train_idx), ds.subset(test_idx)};
}

struct SynthOptions {
    /// Peak amplitude of a class blob around the mid-grey background. Sets how
    /// far apart class prototypes sit relative to added measurement noise.
    double blob_amplitude = 0.1;
    /// Per-pixel i.i.d. jitter added to each sample of a class.
    double intra_sigma = 0.05;
};

/// One class prototype: 5-15 Gaussian blobs of random sign on a mid-grey
/// background, clamped to [0,1].
inline Vector synth_prototype(const std::vector<std::size_t>& dims, Rng& rng, const SynthOptions& opts = {}) {
    detail::require(dims.size() == 2, "synth_faces: dims must be 2D (height x width)");
    detail::require(dims[0] >= 8 && dims[1] >= 8, "synth_faces: image must be at least 8x8");
    const std::size_t h = dims[0], w = dims[1];
    const double scale = static_cast<double>(std::min(h, w));
    Vector proto(h * w, 0.5);
    const auto blobs = 5 + rng.below(11);
    for (std::uint64_t b = 0; b < blobs; ++b) {
        const double cy = rng.uniform(0.0, static_cast<double>(h - 1));
        const double cx = rng.uniform(0.0, static_cast<double>(w - 1));
        const double radius = rng.uniform(0.08, 0.2) * scale;
        const double amp = (rng.uniform() < 0.5 ? -1.0 : 1.0) * opts.blob_amplitude * rng.uniform(0.5, 1.0);
        const double inv = 1.0 / (2.0 * radius * radius);
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const double dy = static_cast<double>(i) - cy, dx = static_cast<double>(j) - cx;
                proto[i * w + j] += amp * std::exp(-(dy * dy + dx * dx) * inv);
            }
    }
    for (auto& v : proto) v = std::clamp(v, 0.0, 1.0);
    return proto;
}

/// Synthetic structured images standing in for a small face dataset. Each
/// sample is its class prototype plus per-pixel jitter, clamped to [0,1].
/// Labels are grouped by class: sample i has label i / per_class.
inline Dataset synth_faces(std::size_t classes, std::size_t per_class, const std::vector<std::size_t>& dims, Rng& rng,
                           const SynthOptions& opts = {}) {
    detail::require(classes >= 1, "synth_faces: need at least one class");
    detail::require(per_class >= 2, "synth_faces: per_class must be >= 2");
    detail::require(dims.size() == 2, "synth_faces: dims must be 2D (height x width)");
    detail::require(dims[0] >= 8 && dims[1] >= 8, "synth_faces: image must be at least 8x8");
    const std::size_t p = dims[0] * dims[1];

    Dataset ds;
    ds.dims = dims;
    ds.classes = classes;
    ds.X = DenseMatrix(classes * per_class, p);
    ds.y.resize(classes * per_class);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto proto = synth_prototype(dims, rng, opts);
        for (std::size_t s = 0; s < per_class; ++s) {
            const auto i = c * per_class + s;
            auto row = ds.X.row(i);
            for (std::size_t j = 0; j < p; ++j) row[j] = std::clamp(proto[j] + opts.intra_sigma * rng.normal(), 0.0, 1.0);
            ds.y[i] = static_cast<std::uint32_t>(c);
        }
    }
    return ds;
}

/// Pearson correlation over all horizontally and vertically adjacent pixel
/// pairs of a 2D image.
inline double neighbor_correlation(std::span<const double> image, std::size_t h, std::size_t w) {
    detail::require_dims(image.size() == h * w, "neighbor_correlation: size mismatch");
    std::vector<double> a, b;
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            if (j + 1 < w) { a.push_back(image[i * w + j]); b.push_back(image[i * w + j + 1]); }
            if (i + 1 < h) { a.push_back(image[i * w + j]); b.push_back(image[(i + 1) * w + j]); }
        }
    const auto n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        sab += (a[t] - ma) * (b[t] - mb);
        saa += (a[t] - ma) * (a[t] - ma);
        sbb += (b[t] - mb) * (b[t] - mb);
    }
    return (saa > 0.0 && sbb > 0.0) ? sab / std::sqrt(saa * sbb) : 0.0;
}

} // namespace fgreg
