#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dlgn/matrix.hpp"

namespace dlgn {

// Sample-major packed bits; each row is padded to whole 64-bit words.
class BitMatrix {
public:
    BitMatrix() = default;
    BitMatrix(std::size_t rows, std::size_t cols);

    static BitMatrix from_bytes(const Matrix<std::uint8_t>& m);
    Matrix<std::uint8_t> to_bytes() const;

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t words_per_row() const { return words_; }

    bool get(std::size_t r, std::size_t c) const { return (data_[r * words_ + c / 64] >> (c % 64)) & 1; }
    void set(std::size_t r, std::size_t c, bool v) {
        auto& w = data_[r * words_ + c / 64];
        const std::uint64_t bit = std::uint64_t{1} << (c % 64);
        w = v ? (w | bit) : (w & ~bit);
    }
    std::span<std::uint64_t> row_words(std::size_t r) { return {data_.data() + r * words_, words_}; }
    std::span<const std::uint64_t> row_words(std::size_t r) const {
        return {data_.data() + r * words_, words_};
    }

    // Copies `src` row `from` into row `to` of this matrix (same column count).
    void copy_row(std::size_t to, const BitMatrix& src, std::size_t from);

    bool operator==(const BitMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t words_ = 0;
    std::vector<std::uint64_t> data_;
};

struct Splits {
    std::vector<std::uint32_t> train;
    std::vector<std::uint32_t> val;
    std::vector<std::uint32_t> test;
    bool operator==(const Splits&) const = default;
};

enum class Split { Train, Val, Test };
const char* split_name(Split s);

// Which source dataset and source label a concatenated class came from.
struct LabelOrigin {
    std::string source;
    std::uint32_t source_label = 0;
    bool operator==(const LabelOrigin&) const = default;
};

struct BinaryDataset {
    BitMatrix bits;                   // binarized samples, used for all discrete evaluation
    std::optional<Matrix<float>> real;  // pre-binarization values in [0, 1], if any
    std::vector<std::uint32_t> labels;
    std::size_t num_classes = 0;
    Splits splits;
    std::string provenance;
    std::vector<LabelOrigin> label_map;  // one entry per class; may be empty

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return bits.cols(); }
    const std::vector<std::uint32_t>& indices(Split s) const;
    // Throws std::invalid_argument on label range, split overlap or shape errors.
    void validate() const;
    bool operator==(const BinaryDataset&) const = default;
};

struct SyntheticSpec {
    std::size_t num_classes = 10;
    std::size_t dim = 784;
    std::size_t fixed_bits_min = 5;
    std::size_t fixed_bits_max = 40;
    std::size_t samples_per_class = 600;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;  // per-class stratified train/test split

    void validate() const;
};

// Positions fixed for one class and the bit each carries.
struct ClassSignature {
    std::vector<std::uint32_t> positions;
    std::vector<std::uint8_t> values;
    bool operator==(const ClassSignature&) const = default;
};

struct SyntheticDataset {
    BinaryDataset data;
    std::vector<ClassSignature> classes;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

// JSON with the per-class fixed positions and values.
std::string signatures_json(const SyntheticSpec& spec, const std::vector<ClassSignature>& classes);

// IDX container (big-endian dims, unsigned-byte payload).
struct IdxTensor {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
    bool operator==(const IdxTensor&) const = default;
};

IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_idx(const IdxTensor& t);

struct LabeledImages {
    Matrix<float> pixels;  // one row per image, byte/255
    std::vector<std::uint32_t> labels;
    std::vector<std::uint32_t> image_shape;
};

// Reads an images file (rank >= 2) and its labels file (rank 1).
LabeledImages load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// bit = x > threshold.
std::vector<std::uint8_t> binarize(std::span<const float> x, float threshold = 0.5f);

// Three thresholds (1/4, 2/4, 3/4) on a flattened 32x32 RGB image.
inline constexpr std::size_t kRgbLength = 3072;
std::vector<std::uint8_t> threshold_expand(std::span<const float> x);

// Builds a dataset from a train and a test image set: bits are x > 0.5, the
// real-valued copy is retained for continuous-input training.
BinaryDataset dataset_from_images(const LabeledImages& train, const LabeledImages& test,
                                  std::size_t num_classes, const std::string& name);

// Moves `fraction` of the training split into the validation split.
void make_validation_split(BinaryDataset& ds, double fraction, std::uint64_t seed);

BinaryDataset concat_datasets(const std::vector<BinaryDataset>& parts);
BinaryDataset take_classes(const BinaryDataset& ds, std::size_t k);

// Gathers rows as 0/1 doubles (binary) or the real copy (continuous).
Matrix<double> gather_inputs(const BinaryDataset& ds, std::span<const std::uint32_t> rows,
                             bool continuous = false);
Matrix<std::uint8_t> gather_bits(const BinaryDataset& ds, std::span<const std::uint32_t> rows);

// Binary container, see docs/formats.md.
std::vector<std::uint8_t> encode_dataset(const BinaryDataset& ds);
BinaryDataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const std::filesystem::path& path, const BinaryDataset& ds);
BinaryDataset load_dataset(const std::filesystem::path& path);

// CSV with columns label,source,source_label.
std::string label_map_csv(const BinaryDataset& ds);

}  // namespace dlgn
