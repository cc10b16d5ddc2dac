#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gpp/matrix.hpp"
#include "gpp/rng.hpp"

namespace gpp::data {

// Feature matrix with per-sample utility and sensitive class labels, one
// label vector per attribute.
struct LabeledDataset {
    RealMatrix x;                     // n x d_x
    std::vector<std::vector<int>> u;  // d_u attributes, each of length n
    std::vector<std::vector<int>> s;  // d_s attributes, each of length n
    std::vector<int> u_cardinality;
    std::vector<int> s_cardinality;

    std::size_t size() const { return x.rows(); }
    std::size_t feature_dim() const { return x.cols(); }
    void validate() const;
    LabeledDataset subset(const std::vector<std::size_t>& indices) const;
};

// ---- IDX binary format ----------------------------------------------------

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

struct IdxTensor {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<double> reals;  // image payload mapped to [0,1] by /255
    std::vector<int> ints;      // label payload

    std::size_t element_count() const;
};

// Big-endian header {magic, dims...}, u8 payload. Throws ParseError naming
// the byte offset on bad magic, truncation, or dimension overflow.
IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes);

// Inverse of parse_idx; image reals are re-quantized by *255.
std::vector<std::uint8_t> serialize_idx(const IdxTensor& tensor);

IdxTensor load_idx_file(const std::string& path);
void write_idx_file(const IdxTensor& tensor, const std::string& path);

// ---- Dataset constructions -------------------------------------------------

// Two-digit composite: random pairing without replacement, x = the two
// flattened images side by side, u = digit sum in {0..18}, s = parity.
LabeledDataset build_mnist_composite(const RealMatrix& images,
                                     const std::vector<int>& digit_labels,
                                     std::uint64_t seed);

// Binary (u, s) with Pearson correlation exactly rho: s ~ Bernoulli(1/2),
// u = s with probability (1+rho)/2. Features carry each label in its own
// fixed 4-wide unit-norm block at amplitude 2 plus standard normal noise.
LabeledDataset gen_correlated_synthetic(std::size_t n, std::size_t d_x, double rho,
                                        std::uint64_t seed);

// Procedural stand-in for handwritten-digit IDX sources: ten fixed sparse
// templates, per-sample brightness jitter and pixel noise. Lets the full
// composite pipeline run where the real files are not installed.
struct SurrogateDigits {
    RealMatrix images;  // n x 784, [0,1]
    std::vector<int> labels;
};
SurrogateDigits gen_surrogate_digits(std::size_t n, std::uint64_t seed);

// ---- CSV ingestion ----------------------------------------------------------

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;  // population stddev, floored at 1e-12

    void apply(RealMatrix& features) const;
};

struct CsvDataset {
    LabeledDataset dataset;
    Standardizer standardizer;
    std::vector<double> u_label_values;  // dense index -> raw label value
    std::vector<double> s_label_values;
};

// Header row, comma delimiter. Features standardized to zero mean and unit
// variance on the loaded (train) data; labels re-indexed densely from 0.
// Pass `apply_standardizer` to reuse train statistics on a test file, and
// the train label maps so indices stay consistent.
CsvDataset load_csv_labeled(const std::string& path, const std::vector<std::size_t>& feature_cols,
                            std::size_t utility_col, std::size_t sensitive_col,
                            const Standardizer* apply_standardizer = nullptr,
                            const std::vector<double>* u_label_values = nullptr,
                            const std::vector<double>* s_label_values = nullptr);

// ---- Partitioning ------------------------------------------------------------

struct Shard {
    std::uint32_t client_id = 0;
    std::vector<std::size_t> indices;
};

enum class PartitionMode { kUniformRandom, kBySensitiveClass };

// Disjoint cover of the index set. kBySensitiveClass assigns every class of
// the first sensitive attribute to exactly one client.
std::vector<Shard> partition_horizontal(const LabeledDataset& dataset, std::size_t t,
                                        PartitionMode mode, std::uint64_t seed);

// Stratified on the first sensitive attribute.
std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& dataset,
                                                           double fraction, std::uint64_t seed);

// ---- Binary dataset cache -----------------------------------------------------

void save_cache(const LabeledDataset& dataset, const std::string& path);
LabeledDataset load_cache(const std::string& path);

}  // namespace gpp::data
