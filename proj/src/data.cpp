#include "gpp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "gpp/errors.hpp"

namespace gpp::data {

namespace {

std::uint32_t read_be_u32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
    if (offset + 4 > bytes.size())
        throw ParseError("idx: truncated header at byte offset " + std::to_string(offset));
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[offset + 3]);
}

void append_be_u32(std::vector<std::uint8_t>& bytes, std::uint32_t v) {
    bytes.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
    bytes.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    bytes.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
}

template <typename T>
void write_le(std::ofstream& out, T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in, const std::string& what) {
    std::uint8_t buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw DataError("cache: truncated while reading " + what);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace

void LabeledDataset::validate() const {
    const std::size_t n = x.rows();
    if (u.size() != u_cardinality.size() || s.size() != s_cardinality.size())
        throw DataError("LabeledDataset: attribute/cardinality count mismatch");
    for (std::size_t j = 0; j < u.size(); ++j) {
        if (u[j].size() != n) throw DataError("LabeledDataset: utility attribute length != n");
        for (int v : u[j])
            if (v < 0 || v >= u_cardinality[j])
                throw DataError("LabeledDataset: utility label out of range");
    }
    for (std::size_t j = 0; j < s.size(); ++j) {
        if (s[j].size() != n) throw DataError("LabeledDataset: sensitive attribute length != n");
        for (int v : s[j])
            if (v < 0 || v >= s_cardinality[j])
                throw DataError("LabeledDataset: sensitive label out of range");
    }
    if (!x.all_finite()) throw DataError("LabeledDataset: non-finite feature");
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
    LabeledDataset out;
    out.x = RealMatrix(indices.size(), x.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= size()) throw DataError("subset: index out of range");
        std::copy(x.row(indices[i]), x.row(indices[i]) + x.cols(), out.x.row(i));
    }
    out.u.resize(u.size());
    out.s.resize(s.size());
    for (std::size_t j = 0; j < u.size(); ++j) {
        out.u[j].reserve(indices.size());
        for (std::size_t i : indices) out.u[j].push_back(u[j][i]);
    }
    for (std::size_t j = 0; j < s.size(); ++j) {
        out.s[j].reserve(indices.size());
        for (std::size_t i : indices) out.s[j].push_back(s[j][i]);
    }
    out.u_cardinality = u_cardinality;
    out.s_cardinality = s_cardinality;
    return out;
}

std::size_t IdxTensor::element_count() const {
    std::size_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes) {
    IdxTensor tensor;
    tensor.magic = read_be_u32(bytes, 0);
    std::size_t ndims;
    if (tensor.magic == kIdxLabelMagic) {
        ndims = 1;
    } else if (tensor.magic == kIdxImageMagic) {
        ndims = 3;
    } else {
        throw ParseError("idx: bad magic 0x" + [&] {
            std::ostringstream os;
            os << std::hex << tensor.magic;
            return os.str();
        }() + " at byte offset 0");
    }
    std::size_t offset = 4;
    std::size_t count = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        const std::uint32_t dim = read_be_u32(bytes, offset);
        offset += 4;
        if (dim != 0 && count > (std::size_t{1} << 40) / dim)
            throw ParseError("idx: dimension overflow at byte offset " +
                             std::to_string(offset - 4));
        count *= dim;
        tensor.dims.push_back(dim);
    }
    if (bytes.size() != offset + count)
        throw ParseError("idx: payload truncated, expected " + std::to_string(count) +
                         " bytes from byte offset " + std::to_string(offset) + ", have " +
                         std::to_string(bytes.size() - offset));
    if (tensor.magic == kIdxLabelMagic) {
        tensor.ints.reserve(count);
        for (std::size_t i = 0; i < count; ++i) tensor.ints.push_back(bytes[offset + i]);
    } else {
        tensor.reals.reserve(count);
        for (std::size_t i = 0; i < count; ++i)
            tensor.reals.push_back(static_cast<double>(bytes[offset + i]) / 255.0);
    }
    return tensor;
}

std::vector<std::uint8_t> serialize_idx(const IdxTensor& tensor) {
    std::vector<std::uint8_t> bytes;
    append_be_u32(bytes, tensor.magic);
    for (std::uint32_t d : tensor.dims) append_be_u32(bytes, d);
    if (tensor.magic == kIdxLabelMagic) {
        for (int v : tensor.ints) {
            if (v < 0 || v > 255) throw DomainError("serialize_idx: label out of u8 range");
            bytes.push_back(static_cast<std::uint8_t>(v));
        }
    } else if (tensor.magic == kIdxImageMagic) {
        for (double v : tensor.reals) {
            if (!(v >= 0.0 && v <= 1.0))
                throw DomainError("serialize_idx: image value outside [0,1]");
            bytes.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
        }
    } else {
        throw DomainError("serialize_idx: unsupported magic");
    }
    return bytes;
}

IdxTensor load_idx_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open idx file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return parse_idx(bytes);
}

void write_idx_file(const IdxTensor& tensor, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_idx(tensor);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

LabeledDataset build_mnist_composite(const RealMatrix& images,
                                     const std::vector<int>& digit_labels,
                                     std::uint64_t seed) {
    if (images.rows() != digit_labels.size())
        throw DataError("build_mnist_composite: image/label count mismatch");
    std::size_t n = images.rows();
    if (n % 2 == 1) n -= 1;  // odd sample count: drop last
    if (n == 0) throw DataError("build_mnist_composite: need at least 2 images");

    std::vector<std::size_t> order(images.rows());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    shuffle(order, rng);

    const std::size_t d = images.cols();
    const std::size_t pairs = n / 2;
    LabeledDataset out;
    out.x = RealMatrix(pairs, 2 * d);
    out.u.assign(1, std::vector<int>());
    out.s.assign(1, std::vector<int>());
    out.u[0].reserve(pairs);
    out.s[0].reserve(pairs);
    out.u_cardinality = {19};
    out.s_cardinality = {2};
    for (std::size_t p = 0; p < pairs; ++p) {
        const std::size_t a = order[2 * p];
        const std::size_t b = order[2 * p + 1];
        std::copy(images.row(a), images.row(a) + d, out.x.row(p));
        std::copy(images.row(b), images.row(b) + d, out.x.row(p) + d);
        const int sum = digit_labels[a] + digit_labels[b];
        if (sum < 0 || sum > 18)
            throw DataError("build_mnist_composite: digit label outside 0..9");
        out.u[0].push_back(sum);
        out.s[0].push_back(sum % 2);
    }
    return out;
}

LabeledDataset gen_correlated_synthetic(std::size_t n, std::size_t d_x, double rho,
                                        std::uint64_t seed) {
    if (d_x < 8) throw ConfigError("gen_correlated_synthetic: d_x must be >= 8");
    if (!(rho >= 0.0 && rho <= 1.0))
        throw ConfigError("gen_correlated_synthetic: rho must lie in [0,1]");
    if (n == 0) throw ConfigError("gen_correlated_synthetic: n must be positive");

    constexpr double kAmplitude = 2.0;
    constexpr double kPattern = 0.5;  // 4 coordinates at 0.5 each: unit norm

    Rng rng(seed);
    LabeledDataset out;
    out.x = RealMatrix(n, d_x);
    out.u.assign(1, std::vector<int>(n));
    out.s.assign(1, std::vector<int>(n));
    out.u_cardinality = {2};
    out.s_cardinality = {2};
    const double p_match = (1.0 + rho) / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int s = rng.uniform() < 0.5 ? 0 : 1;
        const int u = rng.uniform() < p_match ? s : 1 - s;
        out.s[0][i] = s;
        out.u[0][i] = u;
        double* row = out.x.row(i);
        for (std::size_t j = 0; j < d_x; ++j) row[j] = rng.normal();
        for (std::size_t j = 0; j < 4; ++j) row[j] += kAmplitude * kPattern * u;
        for (std::size_t j = 4; j < 8; ++j) row[j] += kAmplitude * kPattern * s;
    }
    return out;
}

SurrogateDigits gen_surrogate_digits(std::size_t n, std::uint64_t seed) {
    constexpr std::size_t kPixels = 28 * 28;
    constexpr std::size_t kSharedPixels = 130;  // stroke mass common to all digits
    constexpr std::size_t kDigitPixels = 55;    // class-specific pixels
    constexpr double kKeepProbability = 0.72;   // per-sample template dropout
    constexpr double kNoiseSigma = 0.28;

    // Templates come from a fixed stream so every generated set shares the
    // same ten classes, the way a real source dataset would. Classes share a
    // common mass and differ in a sparse overlay; together with dropout and
    // pixel noise this keeps single-image classification good but imperfect,
    // in the ballpark of an MLP on real handwritten digits.
    Rng template_rng(0x5179e5u);
    std::vector<std::size_t> pix(kPixels);
    std::iota(pix.begin(), pix.end(), 0);
    shuffle(pix, template_rng);
    const std::vector<std::size_t> shared(pix.begin(), pix.begin() + kSharedPixels);
    std::vector<std::vector<std::size_t>> overlays(10);
    std::size_t cursor = kSharedPixels;
    for (auto& overlay : overlays) {
        overlay.assign(pix.begin() + cursor, pix.begin() + cursor + kDigitPixels);
        cursor += kDigitPixels;
    }

    Rng rng(seed);
    SurrogateDigits out;
    out.images = RealMatrix(n, kPixels, 0.0);
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int digit = static_cast<int>(rng.uniform_index(10));
        out.labels[i] = digit;
        double* row = out.images.row(i);
        const double brightness = rng.uniform(0.45, 1.0);
        for (std::size_t p : shared)
            if (rng.uniform() < kKeepProbability) row[p] = brightness;
        for (std::size_t p : overlays[static_cast<std::size_t>(digit)])
            if (rng.uniform() < kKeepProbability) row[p] = brightness;
        for (std::size_t p = 0; p < kPixels; ++p) {
            const double v = row[p] + kNoiseSigma * rng.normal();
            row[p] = std::min(std::max(v, 0.0), 1.0);
            // quantize to the u8 grid so an IDX write/parse round-trips exactly
            row[p] = std::lround(row[p] * 255.0) / 255.0;
        }
    }
    return out;
}

void Standardizer::apply(RealMatrix& features) const {
    if (features.cols() != mean.size())
        throw ShapeError("Standardizer: feature width mismatch");
    for (std::size_t i = 0; i < features.rows(); ++i) {
        double* row = features.row(i);
        for (std::size_t j = 0; j < features.cols(); ++j)
            row[j] = (row[j] - mean[j]) / stddev[j];
    }
}

CsvDataset load_csv_labeled(const std::string& path, const std::vector<std::size_t>& feature_cols,
                            std::size_t utility_col, std::size_t sensitive_col,
                            const Standardizer* apply_standardizer,
                            const std::vector<double>* u_label_values,
                            const std::vector<double>* s_label_values) {
    if (feature_cols.empty()) throw ConfigError("load_csv_labeled: no feature columns");
    std::ifstream in(path);
    if (!in) throw DataError("cannot open csv file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file (no header row)");
    const std::size_t header_cols = static_cast<std::size_t>(
        std::count(line.begin(), line.end(), ',')) + 1;
    const std::size_t max_needed =
        std::max({*std::max_element(feature_cols.begin(), feature_cols.end()), utility_col,
                  sensitive_col});
    if (max_needed >= header_cols)
        throw ConfigError("load_csv_labeled: column " + std::to_string(max_needed) +
                          " requested but file has " + std::to_string(header_cols) + " columns");

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> cells;
        cells.reserve(header_cols);
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                const double v = std::stod(cell, &used);
                while (used < cell.size() &&
                       (cell[used] == ' ' || cell[used] == '\r' || cell[used] == '\t'))
                    ++used;
                if (used != cell.size()) throw std::invalid_argument(cell);
                cells.push_back(v);
            } catch (const std::exception&) {
                throw ParseError(path + ": non-numeric cell '" + cell + "' at row " +
                                 std::to_string(line_no));
            }
        }
        if (cells.size() != header_cols)
            throw ParseError(path + ": ragged row " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(header_cols));
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw DataError(path + ": no data rows");

    CsvDataset out;
    const std::size_t n = rows.size();
    out.dataset.x = RealMatrix(n, feature_cols.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < feature_cols.size(); ++j)
            out.dataset.x(i, j) = rows[i][feature_cols[j]];

    if (apply_standardizer) {
        out.standardizer = *apply_standardizer;
    } else {
        out.standardizer.mean.assign(feature_cols.size(), 0.0);
        out.standardizer.stddev.assign(feature_cols.size(), 0.0);
        for (std::size_t j = 0; j < feature_cols.size(); ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += out.dataset.x(i, j);
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = out.dataset.x(i, j) - mean;
                var += d * d;
            }
            var /= static_cast<double>(n);
            out.standardizer.mean[j] = mean;
            out.standardizer.stddev[j] = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;
        }
    }
    out.standardizer.apply(out.dataset.x);

    auto densify = [&](std::size_t col, const std::vector<double>* fixed_values,
                       std::vector<double>& values_out, std::vector<int>& labels_out) {
        std::map<double, int> to_index;
        if (fixed_values) {
            for (std::size_t k = 0; k < fixed_values->size(); ++k)
                to_index[(*fixed_values)[k]] = static_cast<int>(k);
        } else {
            for (const auto& row : rows) to_index.emplace(row[col], 0);
            int next = 0;
            for (auto& [value, index] : to_index) index = next++;
        }
        values_out.resize(to_index.size());
        for (const auto& [value, index] : to_index)
            values_out[static_cast<std::size_t>(index)] = value;
        labels_out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto it = to_index.find(rows[i][col]);
            if (it == to_index.end())
                throw DataError(path + ": label value " + std::to_string(rows[i][col]) +
                                " at row " + std::to_string(i + 2) +
                                " not present in the training label map");
            labels_out.push_back(it->second);
        }
        return static_cast<int>(to_index.size());
    };

    out.dataset.u.resize(1);
    out.dataset.s.resize(1);
    out.dataset.u_cardinality = {densify(utility_col, u_label_values, out.u_label_values,
                                         out.dataset.u[0])};
    out.dataset.s_cardinality = {densify(sensitive_col, s_label_values, out.s_label_values,
                                         out.dataset.s[0])};
    out.dataset.validate();
    return out;
}

std::vector<Shard> partition_horizontal(const LabeledDataset& dataset, std::size_t t,
                                        PartitionMode mode, std::uint64_t seed) {
    const std::size_t n = dataset.size();
    if (t == 0 || t > n)
        throw ConfigError("partition_horizontal: need 1 <= t <= n, got t=" + std::to_string(t));
    std::vector<Shard> shards(t);
    for (std::size_t m = 0; m < t; ++m) shards[m].client_id = static_cast<std::uint32_t>(m);

    Rng rng(seed);
    if (mode == PartitionMode::kUniformRandom) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        shuffle(order, rng);
        // contiguous chunks of n/t, remainder spread over the first clients
        const std::size_t base = n / t;
        std::size_t extra = n % t;
        std::size_t pos = 0;
        for (std::size_t m = 0; m < t; ++m) {
            std::size_t take = base + (extra > 0 ? 1 : 0);
            if (extra > 0) --extra;
            shards[m].indices.assign(order.begin() + pos, order.begin() + pos + take);
            pos += take;
        }
    } else {
        if (dataset.s.empty())
            throw ConfigError("partition_horizontal: dataset has no sensitive attribute");
        const int n_classes = dataset.s_cardinality[0];
        if (static_cast<std::size_t>(n_classes) < t)
            throw ConfigError("partition_horizontal: by-sensitive-class needs |S| >= t");
        std::vector<int> class_order(n_classes);
        std::iota(class_order.begin(), class_order.end(), 0);
        shuffle(class_order, rng);
        std::vector<std::size_t> owner(n_classes);
        for (std::size_t k = 0; k < class_order.size(); ++k)
            owner[static_cast<std::size_t>(class_order[k])] = k % t;
        for (std::size_t i = 0; i < n; ++i)
            shards[owner[static_cast<std::size_t>(dataset.s[0][i])]].indices.push_back(i);
        for (const auto& shard : shards)
            if (shard.indices.empty())
                throw ConfigError("partition_horizontal: a client received no samples");
    }
    return shards;
}

std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& dataset,
                                                           double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("train_test_split: fraction must lie in (0,1)");
    if (dataset.s.empty()) throw ConfigError("train_test_split: no sensitive attribute");

    Rng rng(seed);
    std::vector<std::size_t> train_idx, test_idx;
    // stratify on the first sensitive attribute
    for (int c = 0; c < dataset.s_cardinality[0]; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < dataset.size(); ++i)
            if (dataset.s[0][i] == c) members.push_back(i);
        shuffle(members, rng);
        const std::size_t take =
            static_cast<std::size_t>(std::lround(fraction * static_cast<double>(members.size())));
        for (std::size_t k = 0; k < members.size(); ++k)
            (k < take ? train_idx : test_idx).push_back(members[k]);
    }
    if (train_idx.empty() || test_idx.empty())
        throw ConfigError("train_test_split: degenerate split sizes");
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {dataset.subset(train_idx), dataset.subset(test_idx)};
}

void save_cache(const LabeledDataset& dataset, const std::string& path) {
    dataset.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open cache for writing: " + path);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.feature_dim()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.u.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.s.size()));
    for (int c : dataset.u_cardinality) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c));
    for (int c : dataset.s_cardinality) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c));
    for (double v : dataset.x.values()) write_le<float>(out, static_cast<float>(v));
    for (const auto& attr : dataset.u)
        for (int v : attr) write_le<std::uint16_t>(out, static_cast<std::uint16_t>(v));
    for (const auto& attr : dataset.s)
        for (int v : attr) write_le<std::uint16_t>(out, static_cast<std::uint16_t>(v));
    if (!out) throw DataError("cache: write failed for " + path);
}

LabeledDataset load_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open cache: " + path);
    const auto n = read_le<std::uint32_t>(in, "n");
    const auto d_x = read_le<std::uint32_t>(in, "d_x");
    const auto d_u = read_le<std::uint32_t>(in, "d_u");
    const auto d_s = read_le<std::uint32_t>(in, "d_s");
    LabeledDataset out;
    out.u_cardinality.resize(d_u);
    out.s_cardinality.resize(d_s);
    for (auto& c : out.u_cardinality) c = static_cast<int>(read_le<std::uint32_t>(in, "u card"));
    for (auto& c : out.s_cardinality) c = static_cast<int>(read_le<std::uint32_t>(in, "s card"));
    out.x = RealMatrix(n, d_x);
    for (auto& v : out.x.values()) v = static_cast<double>(read_le<float>(in, "features"));
    out.u.assign(d_u, std::vector<int>(n));
    out.s.assign(d_s, std::vector<int>(n));
    for (auto& attr : out.u)
        for (auto& v : attr) v = static_cast<int>(read_le<std::uint16_t>(in, "u labels"));
    for (auto& attr : out.s)
        for (auto& v : attr) v = static_cast<int>(read_le<std::uint16_t>(in, "s labels"));
    out.validate();
    return out;
}

}  // namespace gpp::data
