#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusionhead/linalg.hpp"

namespace fusionhead {

/// One feature source: n samples by p feature columns.
struct BranchDataset {
    std::string name;
    Matrix features;

    std::size_t rows() const noexcept { return features.rows(); }
    std::size_t dim() const noexcept { return features.cols(); }
};

/// Class labels in [0, num_classes).
class LabelVector {
public:
    LabelVector() = default;
    // Throws ValidationError on an empty vector, K < 2 or an out-of-range label.
    LabelVector(std::vector<int> labels, int num_classes);

    std::size_t size() const noexcept { return labels_.size(); }
    int num_classes() const noexcept { return num_classes_; }
    int operator[](std::size_t i) const { return labels_[i]; }
    std::span<const int> values() const noexcept { return labels_; }

    /// Classes in [0, K) that no sample carries.
    std::vector<int> missing_classes() const;
    LabelVector select(std::span<const std::size_t> indices) const;

    bool operator==(const LabelVector&) const = default;

private:
    std::vector<int> labels_;
    int num_classes_ = 0;
};

struct SyntheticBranch {
    std::size_t dim = 0;
    std::vector<int> informative;  // classes that get a mean offset in this branch
    double signal = 1.0;
    double noise = 1.0;
};

struct SyntheticSpec {
    int num_classes = 0;
    std::size_t per_class = 0;
    std::vector<SyntheticBranch> branches;
    std::uint64_t seed = 0;
};

struct SyntheticData {
    std::vector<BranchDataset> branches;
    LabelVector labels;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// MBFF: "MBFF" | u32 version | u32 n | u32 p | n*p float32, little-endian.
inline constexpr std::uint32_t kMbffVersion = 1;

/// Loads MBFF, or CSV when the file lacks the MBFF magic and ends in ".csv".
/// The dataset name is the file stem.
BranchDataset load_features(const std::filesystem::path& path);
BranchDataset decode_mbff(std::string_view bytes, std::string name);
BranchDataset parse_features_csv(std::string_view text, std::string name);

std::string encode_mbff(const Matrix& features);
void write_features(const std::filesystem::path& path, const BranchDataset& ds);

LabelVector load_labels(const std::filesystem::path& path);
LabelVector parse_labels(std::string_view text);
std::string format_labels(const LabelVector& labels);
void write_labels(const std::filesystem::path& path, const LabelVector& labels);

/// Class c at position r of a branch's sorted informative list gets +signal on
/// every coordinate of block r, where blocks are dim / |informative| wide.
/// Samples are ordered class-major. Pure function of the spec.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Throws ShapeError unless every branch has the same row count.
void check_aligned(std::span<const BranchDataset> branches);

/// Column blocks in the order given.
BranchDataset concat_features(std::span<const BranchDataset> branches);

/// Stratified by class, deterministic in seed. Each class contributes
/// round(fraction * count) samples to train, clamped to [1, count - 1].
/// Index lists are ascending.
Split split_train_test(const LabelVector& labels, double fraction, std::uint64_t seed);

BranchDataset select_rows(const BranchDataset& ds, std::span<const std::size_t> indices);

/// Scales each row to unit L2 norm; all-zero rows are left as is.
BranchDataset l2_normalize_rows(BranchDataset ds);

}  // namespace fusionhead
