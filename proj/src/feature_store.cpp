#include "fusionhead/feature_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>

#include "fusionhead/error.hpp"
#include "fusionhead/io.hpp"
#include "fusionhead/rng.hpp"

namespace fusionhead {

namespace {

constexpr std::string_view kMbffMagic = "MBFF";

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    // A trailing newline yields one empty final line; it is not a record.
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

bool parse_int(std::string_view s, int& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

std::string cell(std::size_t row, std::size_t col) {
    return "row " + std::to_string(row) + ", col " + std::to_string(col);
}

}  // namespace

LabelVector::LabelVector(std::vector<int> labels, int num_classes)
    : labels_(std::move(labels)), num_classes_(num_classes) {
    if (num_classes_ < 2) throw ValidationError("need K >= 2, got K=" + std::to_string(num_classes_));
    if (labels_.empty()) throw ValidationError("label vector is empty");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] < 0 || labels_[i] >= num_classes_) {
            throw ValidationError("label " + std::to_string(labels_[i]) + " at index " +
                                  std::to_string(i) + " outside [0, " +
                                  std::to_string(num_classes_) + ")");
        }
    }
}

std::vector<int> LabelVector::missing_classes() const {
    std::vector<bool> seen(static_cast<std::size_t>(num_classes_), false);
    for (int l : labels_) seen[static_cast<std::size_t>(l)] = true;
    std::vector<int> missing;
    for (int c = 0; c < num_classes_; ++c)
        if (!seen[static_cast<std::size_t>(c)]) missing.push_back(c);
    return missing;
}

LabelVector LabelVector::select(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= labels_.size()) throw ShapeError("label index " + std::to_string(i) + " out of range");
        out.push_back(labels_[i]);
    }
    return LabelVector(std::move(out), num_classes_);
}

BranchDataset decode_mbff(std::string_view bytes, std::string name) {
    io::ByteReader in(bytes, name);
    if (bytes.size() < kMbffMagic.size() || bytes.substr(0, kMbffMagic.size()) != kMbffMagic) {
        throw FormatError(name + ": bad magic, expected \"MBFF\"");
    }
    in.take(kMbffMagic.size());
    const std::uint32_t version = in.u32();
    if (version != kMbffVersion)
        throw FormatError(name + ": unsupported MBFF version " + std::to_string(version));
    const std::size_t n = in.u32();
    const std::size_t p = in.u32();
    if (n == 0 || p == 0)
        throw ValidationError(name + ": empty feature matrix (n=" + std::to_string(n) +
                              ", p=" + std::to_string(p) + ")");
    const std::size_t expected = n * p * sizeof(float);
    if (in.remaining() != expected) {
        throw CorruptionError(name + ": header declares " + std::to_string(n) + "x" +
                              std::to_string(p) + " (" + std::to_string(n * p) +
                              " floats) but payload holds " + std::to_string(in.remaining()) +
                              " bytes");
    }
    Matrix m(n, p);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < p; ++c) {
            const double v = in.f32();
            if (!std::isfinite(v)) throw ValidationError(name + ": non-finite value at " + cell(r, c));
            m(r, c) = v;
        }
    }
    return {std::move(name), std::move(m)};
}

BranchDataset parse_features_csv(std::string_view text, std::string name) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw ValidationError(name + ": CSV has no rows");
    std::vector<double> values;
    std::size_t cols = 0;
    for (std::size_t r = 0; r < lines.size(); ++r) {
        std::size_t count = 0;
        std::size_t start = 0;
        const std::string_view line = lines[r];
        while (true) {
            std::size_t end = line.find(',', start);
            if (end == std::string_view::npos) end = line.size();
            double v = 0.0;
            if (!parse_double(line.substr(start, end - start), v))
                throw FormatError(name + ": unparsable value at " + cell(r, count));
            if (!std::isfinite(v)) throw ValidationError(name + ": non-finite value at " + cell(r, count));
            values.push_back(v);
            ++count;
            if (end == line.size()) break;
            start = end + 1;
        }
        if (r == 0) {
            cols = count;
        } else if (count != cols) {
            throw FormatError(name + ": row " + std::to_string(r) + " has " + std::to_string(count) +
                              " values, expected " + std::to_string(cols));
        }
    }
    return {std::move(name), Matrix(lines.size(), cols, std::move(values))};
}

BranchDataset load_features(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    std::string name = path.stem().string();
    const bool has_magic = bytes.size() >= kMbffMagic.size() &&
                           std::string_view(bytes).substr(0, kMbffMagic.size()) == kMbffMagic;
    if (!has_magic && path.extension() == ".csv") return parse_features_csv(bytes, std::move(name));
    return decode_mbff(bytes, std::move(name));
}

std::string encode_mbff(const Matrix& features) {
    if (features.rows() == 0 || features.cols() == 0) throw ValidationError("cannot encode an empty matrix");
    if (features.rows() > std::numeric_limits<std::uint32_t>::max() ||
        features.cols() > std::numeric_limits<std::uint32_t>::max())
        throw ShapeError("matrix too large for MBFF");
    std::string out;
    out.reserve(16 + features.values().size() * sizeof(float));
    out.append(kMbffMagic);
    io::put_u32(out, kMbffVersion);
    io::put_u32(out, static_cast<std::uint32_t>(features.rows()));
    io::put_u32(out, static_cast<std::uint32_t>(features.cols()));
    for (std::size_t r = 0; r < features.rows(); ++r) {
        for (std::size_t c = 0; c < features.cols(); ++c) {
            const float v = static_cast<float>(features(r, c));
            if (!std::isfinite(v))
                throw ValidationError("value at " + cell(r, c) + " is not representable as float32");
            io::put_f32(out, v);
        }
    }
    return out;
}

void write_features(const std::filesystem::path& path, const BranchDataset& ds) {
    io::write_file_atomic(path, encode_mbff(ds.features));
}

LabelVector parse_labels(std::string_view text) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw ValidationError("labels: missing header line \"K=<int>\"");
    const std::string_view header = trim(lines[0]);
    int k = 0;
    if (!header.starts_with("K=") || !parse_int(header.substr(2), k))
        throw ValidationError("labels line 1: expected \"K=<int>\", got \"" + std::string(header) + "\"");
    if (k < 2) throw ValidationError("labels line 1: need K >= 2, got " + std::to_string(k));
    std::vector<int> labels;
    labels.reserve(lines.size() - 1);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        int v = 0;
        if (!parse_int(lines[i], v))
            throw ValidationError("labels line " + std::to_string(line_no) + ": not an integer");
        if (v < 0 || v >= k)
            throw ValidationError("labels line " + std::to_string(line_no) + ": label " +
                                  std::to_string(v) + " outside [0, " + std::to_string(k) + ")");
        labels.push_back(v);
    }
    if (labels.empty()) throw ValidationError("labels: no labels after header (n == 0)");
    return LabelVector(std::move(labels), k);
}

LabelVector load_labels(const std::filesystem::path& path) {
    try {
        return parse_labels(io::read_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string format_labels(const LabelVector& labels) {
    std::string out = "K=" + std::to_string(labels.num_classes()) + "\n";
    for (int l : labels.values()) {
        out += std::to_string(l);
        out += '\n';
    }
    return out;
}

void write_labels(const std::filesystem::path& path, const LabelVector& labels) {
    io::write_file_atomic(path, format_labels(labels));
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes < 2) throw SpecError("synthetic spec needs at least 2 classes");
    if (spec.per_class == 0) throw SpecError("synthetic spec needs at least 1 sample per class");
    if (spec.branches.empty()) throw SpecError("synthetic spec has no branches");
    bool any_signal = false;
    for (std::size_t b = 0; b < spec.branches.size(); ++b) {
        const auto& br = spec.branches[b];
        const std::string where = "branch " + std::to_string(b) + ": ";
        if (br.dim == 0) throw SpecError(where + "dim must be positive");
        if (!(br.signal > 0.0) || !std::isfinite(br.signal)) throw SpecError(where + "signal must be positive");
        if (!(br.noise > 0.0) || !std::isfinite(br.noise)) throw SpecError(where + "noise must be positive");
        std::set<int> unique(br.informative.begin(), br.informative.end());
        if (unique.size() != br.informative.size()) throw SpecError(where + "duplicate informative class");
        for (int c : br.informative)
            if (c < 0 || c >= spec.num_classes)
                throw SpecError(where + "informative class " + std::to_string(c) + " outside [0, " +
                                std::to_string(spec.num_classes) + ")");
        if (br.informative.size() > br.dim)
            throw SpecError(where + "more informative classes than feature dimensions");
        any_signal = any_signal || !br.informative.empty();
    }
    if (!any_signal) throw SpecError("no branch has any informative class");

    const std::size_t k = static_cast<std::size_t>(spec.num_classes);
    const std::size_t n = k * spec.per_class;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i / spec.per_class);

    SyntheticData out;
    out.labels = LabelVector(labels, spec.num_classes);
    for (std::size_t b = 0; b < spec.branches.size(); ++b) {
        const auto& br = spec.branches[b];
        std::vector<int> informative = br.informative;
        std::sort(informative.begin(), informative.end());
        // block_of[c] is the coordinate block owned by class c, or npos.
        std::vector<std::size_t> block_of(k, std::string::npos);
        for (std::size_t r = 0; r < informative.size(); ++r)
            block_of[static_cast<std::size_t>(informative[r])] = r;
        const std::size_t block = informative.empty() ? 0 : br.dim / informative.size();

        Rng rng(derive_seed(spec.seed, b));
        Matrix m(n, br.dim);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t owner = block_of[static_cast<std::size_t>(labels[i])];
            for (std::size_t j = 0; j < br.dim; ++j) {
                const bool shifted = owner != std::string::npos && j >= owner * block && j < (owner + 1) * block;
                m(i, j) = (shifted ? br.signal : 0.0) + br.noise * rng.normal();
            }
        }
        out.branches.push_back({"branch_" + std::to_string(b), std::move(m)});
    }
    return out;
}

void check_aligned(std::span<const BranchDataset> branches) {
    for (const auto& b : branches) {
        if (b.rows() != branches.front().rows()) {
            throw ShapeError("branch \"" + b.name + "\" has " + std::to_string(b.rows()) +
                             " rows, branch \"" + branches.front().name + "\" has " +
                             std::to_string(branches.front().rows()));
        }
    }
}

BranchDataset concat_features(std::span<const BranchDataset> branches) {
    if (branches.empty()) throw ShapeError("concat_features: no branches");
    check_aligned(branches);
    std::size_t total = 0;
    for (const auto& b : branches) total += b.dim();
    const std::size_t n = branches.front().rows();
    Matrix m(n, total);
    for (std::size_t i = 0; i < n; ++i) {
        auto dst = m.row(i).begin();
        for (const auto& b : branches) {
            auto src = b.features.row(i);
            dst = std::copy(src.begin(), src.end(), dst);
        }
    }
    std::string name = "concat";
    return {std::move(name), std::move(m)};
}

Split split_train_test(const LabelVector& labels, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("split fraction must lie in (0, 1)");
    const std::size_t k = static_cast<std::size_t>(labels.num_classes());
    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);

    Rng rng(derive_seed(seed, 0x5b117));
    Split split;
    for (std::size_t c = 0; c < k; ++c) {
        auto& idx = by_class[c];
        if (idx.empty()) continue;
        if (idx.size() < 2)
            throw StratificationError("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                                      " sample; stratified split needs at least 2");
        rng.shuffle(std::span<std::size_t>(idx));
        auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        take = std::clamp<std::size_t>(take, 1, idx.size() - 1);
        split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
        split.test.insert(split.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

BranchDataset select_rows(const BranchDataset& ds, std::span<const std::size_t> indices) {
    return {ds.name, ds.features.select_rows(indices)};
}

BranchDataset l2_normalize_rows(BranchDataset ds) {
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        auto r = ds.features.row(i);
        double sq = 0.0;
        for (double v : r) sq += v * v;
        if (sq == 0.0) continue;
        const double inv = 1.0 / std::sqrt(sq);
        for (double& v : r) v *= inv;
    }
    return ds;
}

}  // namespace fusionhead
