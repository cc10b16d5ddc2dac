#include "gpp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "gpp/errors.hpp"

namespace gpp::checkpoint {

namespace {

constexpr char kMagic[4] = {'G', 'P', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

double bits_to_double(std::uint64_t bits) {
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::uint64_t double_to_bits(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    return bits;
}

class BlockWriter {
public:
    explicit BlockWriter(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw DataError("checkpoint: cannot open for writing: " + path);
        out_.write(kMagic, 4);
        write_u32(kVersion);
    }

    void tensor(const std::string& name, const RealMatrix& m) {
        write_u32(static_cast<std::uint32_t>(name.size()));
        out_.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(static_cast<std::uint32_t>(m.rows()));
        write_u32(static_cast<std::uint32_t>(m.cols()));
        for (double v : m.values()) write_f64(v);
    }

    void scalar(const std::string& name, double v) { tensor(name, RealMatrix(1, 1, v)); }

    void row(const std::string& name, const std::vector<double>& values) {
        RealMatrix m(1, values.size());
        m.values() = values;
        tensor(name, m);
    }

    void finish() {
        out_.flush();
        if (!out_) throw DataError("checkpoint: write failed");
    }

private:
    void write_u32(std::uint32_t v) {
        char buf[4];
        std::memcpy(buf, &v, 4);
        out_.write(buf, 4);
    }
    void write_f64(double v) {
        char buf[8];
        std::memcpy(buf, &v, 8);
        out_.write(buf, 8);
    }

    std::ofstream out_;
};

class BlockReader {
public:
    explicit BlockReader(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("checkpoint: cannot open: " + path);
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, kMagic, 4) != 0)
            throw DataError("checkpoint: bad magic in " + path);
        const std::uint32_t version = read_u32(in, path);
        if (version != kVersion)
            throw DataError("checkpoint: version " + std::to_string(version) +
                            " unsupported (want " + std::to_string(kVersion) + ")");
        while (true) {
            std::uint32_t name_len;
            char buf[4];
            in.read(buf, 4);
            if (in.eof()) break;
            if (!in) throw DataError("checkpoint: corrupt block header in " + path);
            std::memcpy(&name_len, buf, 4);
            std::string name(name_len, '\0');
            in.read(name.data(), name_len);
            const std::uint32_t rows = read_u32(in, path);
            const std::uint32_t cols = read_u32(in, path);
            RealMatrix m(rows, cols);
            for (auto& v : m.values()) {
                char fb[8];
                in.read(fb, 8);
                if (!in) throw DataError("checkpoint: truncated tensor '" + name + "' in " + path);
                std::memcpy(&v, fb, 8);
            }
            if (!in) throw DataError("checkpoint: truncated block '" + name + "' in " + path);
            blocks_.emplace(std::move(name), std::move(m));
        }
    }

    const RealMatrix& tensor(const std::string& name) const {
        const auto it = blocks_.find(name);
        if (it == blocks_.end()) throw DataError("checkpoint: missing block '" + name + "'");
        return it->second;
    }

    double scalar(const std::string& name) const {
        const RealMatrix& m = tensor(name);
        if (m.size() != 1) throw DataError("checkpoint: block '" + name + "' is not a scalar");
        return m(0, 0);
    }

    bool has(const std::string& name) const { return blocks_.count(name) != 0; }

private:
    static std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
        char buf[4];
        in.read(buf, 4);
        if (!in) throw DataError("checkpoint: truncated header in " + path);
        std::uint32_t v;
        std::memcpy(&v, buf, 4);
        return v;
    }

    std::map<std::string, RealMatrix> blocks_;
};

void write_net(BlockWriter& writer, const std::string& prefix, const nn::DenseNet& net) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        writer.tensor(prefix + "/w" + std::to_string(l), net.layers[l].weight);
        writer.tensor(prefix + "/b" + std::to_string(l), net.layers[l].bias);
    }
    writer.scalar(prefix + "/layers", static_cast<double>(net.layers.size()));
}

nn::DenseNet read_net(const BlockReader& reader, const std::string& prefix,
                      nn::Activation output_activation) {
    const auto n_layers = static_cast<std::size_t>(reader.scalar(prefix + "/layers"));
    nn::DenseNet net;
    for (std::size_t l = 0; l < n_layers; ++l) {
        nn::DenseLayer layer;
        layer.weight = reader.tensor(prefix + "/w" + std::to_string(l));
        layer.bias = reader.tensor(prefix + "/b" + std::to_string(l));
        layer.activation =
            l + 1 == n_layers ? output_activation : nn::Activation::kRelu;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

void write_adam(BlockWriter& writer, const std::string& prefix, const nn::AdamState& state) {
    for (std::size_t i = 0; i < state.m.size(); ++i) {
        writer.tensor(prefix + "/m" + std::to_string(i), state.m[i]);
        writer.tensor(prefix + "/v" + std::to_string(i), state.v[i]);
    }
    writer.row(prefix + "/meta", {static_cast<double>(state.m.size()),
                                  static_cast<double>(state.step), state.beta1, state.beta2,
                                  state.epsilon});
}

nn::AdamState read_adam(const BlockReader& reader, const std::string& prefix) {
    const RealMatrix& meta = reader.tensor(prefix + "/meta");
    if (meta.size() != 5) throw DataError("checkpoint: bad adam meta block");
    nn::AdamState state;
    const auto count = static_cast<std::size_t>(meta(0, 0));
    state.step = static_cast<long>(meta(0, 1));
    state.beta1 = meta(0, 2);
    state.beta2 = meta(0, 3);
    state.epsilon = meta(0, 4);
    for (std::size_t i = 0; i < count; ++i) {
        state.m.push_back(reader.tensor(prefix + "/m" + std::to_string(i)));
        state.v.push_back(reader.tensor(prefix + "/v" + std::to_string(i)));
    }
    return state;
}

}  // namespace

void save_checkpoint(const trainer::TrainedModel& model, const std::string& path) {
    BlockWriter writer(path);
    writer.scalar("meta/kind", static_cast<double>(model.kind));
    writer.scalar("meta/epochs_done", static_cast<double>(model.epochs_done));

    const trainer::TrainConfig& cfg = model.config;
    writer.row("config/scalars",
               {static_cast<double>(cfg.batch_size), static_cast<double>(cfg.classifier_steps),
                cfg.beta, cfg.lambda, cfg.lr, static_cast<double>(cfg.epochs),
                static_cast<double>(cfg.d_z), cfg.noise_scale});
    writer.scalar("config/seed_bits", bits_to_double(cfg.seed));
    std::vector<double> widths(cfg.encoder_hidden.begin(), cfg.encoder_hidden.end());
    writer.row("config/encoder_hidden", widths);
    widths.assign(cfg.classifier_hidden.begin(), cfg.classifier_hidden.end());
    writer.row("config/classifier_hidden", widths);

    write_net(writer, "enc/trunk", model.enc.trunk);
    write_net(writer, "enc/mean", model.enc.mean_head);
    write_net(writer, "enc/logvar", model.enc.logvar_head);
    writer.row("counts", {static_cast<double>(model.utility_classifiers.size()),
                          static_cast<double>(model.adversary_classifiers.size())});
    for (std::size_t j = 0; j < model.utility_classifiers.size(); ++j)
        write_net(writer, "u" + std::to_string(j), model.utility_classifiers[j]);
    for (std::size_t j = 0; j < model.adversary_classifiers.size(); ++j)
        write_net(writer, "s" + std::to_string(j), model.adversary_classifiers[j]);

    write_adam(writer, "adam/enc", model.encoder_adam);
    for (std::size_t j = 0; j < model.utility_adam.size(); ++j)
        write_adam(writer, "adam/u" + std::to_string(j), model.utility_adam[j]);
    for (std::size_t j = 0; j < model.adversary_adam.size(); ++j)
        write_adam(writer, "adam/s" + std::to_string(j), model.adversary_adam[j]);

    const auto rng_state = model.rng.state();
    writer.row("rng/state", {bits_to_double(rng_state[0]), bits_to_double(rng_state[1]),
                             bits_to_double(rng_state[2]), bits_to_double(rng_state[3])});
    writer.finish();
}

trainer::TrainedModel load_checkpoint(const std::string& path) {
    const BlockReader reader(path);
    trainer::TrainedModel model;
    model.kind = static_cast<trainer::ModelKind>(static_cast<int>(reader.scalar("meta/kind")));
    model.epochs_done = static_cast<std::size_t>(reader.scalar("meta/epochs_done"));

    const RealMatrix& cfg_scalars = reader.tensor("config/scalars");
    if (cfg_scalars.size() != 8) throw DataError("checkpoint: bad config block");
    trainer::TrainConfig cfg;
    cfg.batch_size = static_cast<std::size_t>(cfg_scalars(0, 0));
    cfg.classifier_steps = static_cast<std::size_t>(cfg_scalars(0, 1));
    cfg.beta = cfg_scalars(0, 2);
    cfg.lambda = cfg_scalars(0, 3);
    cfg.lr = cfg_scalars(0, 4);
    cfg.epochs = static_cast<std::size_t>(cfg_scalars(0, 5));
    cfg.d_z = static_cast<std::size_t>(cfg_scalars(0, 6));
    cfg.noise_scale = cfg_scalars(0, 7);
    cfg.seed = double_to_bits(reader.scalar("config/seed_bits"));
    cfg.encoder_hidden.clear();
    for (double v : reader.tensor("config/encoder_hidden").values())
        cfg.encoder_hidden.push_back(static_cast<std::size_t>(v));
    cfg.classifier_hidden.clear();
    for (double v : reader.tensor("config/classifier_hidden").values())
        cfg.classifier_hidden.push_back(static_cast<std::size_t>(v));
    model.config = cfg;

    model.enc.trunk = read_net(reader, "enc/trunk", nn::Activation::kRelu);
    model.enc.mean_head = read_net(reader, "enc/mean", nn::Activation::kIdentity);
    model.enc.logvar_head = read_net(reader, "enc/logvar", nn::Activation::kIdentity);

    const RealMatrix& counts = reader.tensor("counts");
    if (counts.size() != 2) throw DataError("checkpoint: bad counts block");
    const auto n_u = static_cast<std::size_t>(counts(0, 0));
    const auto n_s = static_cast<std::size_t>(counts(0, 1));
    for (std::size_t j = 0; j < n_u; ++j)
        model.utility_classifiers.push_back(
            read_net(reader, "u" + std::to_string(j), nn::Activation::kSoftmax));
    for (std::size_t j = 0; j < n_s; ++j)
        model.adversary_classifiers.push_back(
            read_net(reader, "s" + std::to_string(j), nn::Activation::kSoftmax));

    model.encoder_adam = read_adam(reader, "adam/enc");
    for (std::size_t j = 0; j < n_u; ++j)
        model.utility_adam.push_back(read_adam(reader, "adam/u" + std::to_string(j)));
    for (std::size_t j = 0; j < n_s; ++j)
        model.adversary_adam.push_back(read_adam(reader, "adam/s" + std::to_string(j)));

    const RealMatrix& rng_state = reader.tensor("rng/state");
    if (rng_state.size() != 4) throw DataError("checkpoint: bad rng block");
    model.rng.set_state({double_to_bits(rng_state(0, 0)), double_to_bits(rng_state(0, 1)),
                         double_to_bits(rng_state(0, 2)), double_to_bits(rng_state(0, 3))});
    return model;
}

}  // namespace gpp::checkpoint
