#include "gpp/federated.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "gpp/errors.hpp"
#include "gpp/objective.hpp"

namespace gpp::federated {

namespace {

void append_le_u32(std::vector<std::uint8_t>& bytes, std::uint32_t v) {
    bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
    bytes.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    bytes.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    bytes.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t read_le_u32(const std::vector<std::uint8_t>& bytes, std::size_t& offset) {
    if (offset + 4 > bytes.size()) throw ProtocolError("message: truncated u32");
    const std::uint32_t v = static_cast<std::uint32_t>(bytes[offset]) |
                            (static_cast<std::uint32_t>(bytes[offset + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes[offset + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes[offset + 3]) << 24);
    offset += 4;
    return v;
}

void append_le_f32(std::vector<std::uint8_t>& bytes, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    append_le_u32(bytes, bits);
}

float read_le_f32(const std::vector<std::uint8_t>& bytes, std::size_t& offset) {
    const std::uint32_t bits = read_le_u32(bytes, offset);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

RealMatrix gather_rows(const RealMatrix& x, const std::vector<std::size_t>& idx) {
    RealMatrix out(idx.size(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(x.row(idx[i]), x.row(idx[i]) + x.cols(), out.row(i));
    return out;
}

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch, Rng& rng) {
    // with-replacement would bias small shards; draw a partial shuffle
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
        std::swap(order[i], order[j]);
    }
    order.resize(batch);
    return order;
}

}  // namespace

std::vector<std::uint8_t> RoundMessage::serialize() const {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(byte_size());
    bytes.push_back(static_cast<std::uint8_t>(direction));
    append_le_u32(bytes, round);
    append_le_u32(bytes, client_id);
    append_le_u32(bytes, static_cast<std::uint32_t>(payload.size()));
    bytes.insert(bytes.end(), payload.begin(), payload.end());
    return bytes;
}

RoundMessage RoundMessage::parse(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 13) throw ProtocolError("message: shorter than header");
    RoundMessage msg;
    if (bytes[0] > 1) throw ProtocolError("message: unknown direction byte");
    msg.direction = static_cast<Direction>(bytes[0]);
    std::size_t offset = 1;
    msg.round = read_le_u32(bytes, offset);
    msg.client_id = read_le_u32(bytes, offset);
    const std::uint32_t payload_len = read_le_u32(bytes, offset);
    if (bytes.size() != 13 + static_cast<std::size_t>(payload_len))
        throw ProtocolError("message: payload length mismatch");
    msg.payload.assign(bytes.begin() + 13, bytes.end());
    return msg;
}

std::vector<std::uint8_t> encode_sanitized_batch(const SanitizedBatch& batch) {
    const std::size_t n = batch.z.rows();
    for (const auto& attr : batch.u)
        if (attr.size() != n) throw ProtocolError("sanitized batch: label length mismatch");
    std::vector<std::uint8_t> payload;
    payload.reserve(12 + 4 * (batch.z.size() + batch.u.size() * n));
    append_le_u32(payload, static_cast<std::uint32_t>(n));
    append_le_u32(payload, static_cast<std::uint32_t>(batch.z.cols()));
    append_le_u32(payload, static_cast<std::uint32_t>(batch.u.size()));
    for (double v : batch.z.values()) append_le_f32(payload, static_cast<float>(v));
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& attr : batch.u)
            append_le_f32(payload, static_cast<float>(attr[i]));
    return payload;
}

SanitizedBatch decode_sanitized_batch(const std::vector<std::uint8_t>& payload) {
    std::size_t offset = 0;
    const std::uint32_t n = read_le_u32(payload, offset);
    const std::uint32_t d_z = read_le_u32(payload, offset);
    const std::uint32_t d_u = read_le_u32(payload, offset);
    if (payload.size() != 12 + 4ull * (static_cast<std::uint64_t>(n) * d_z +
                                       static_cast<std::uint64_t>(n) * d_u))
        throw ProtocolError("sanitized batch: payload size mismatch");
    SanitizedBatch batch;
    batch.z = RealMatrix(n, d_z);
    for (auto& v : batch.z.values()) v = static_cast<double>(read_le_f32(payload, offset));
    batch.u.assign(d_u, std::vector<int>(n));
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < d_u; ++j)
            batch.u[j][i] = static_cast<int>(std::lround(read_le_f32(payload, offset)));
    return batch;
}

std::vector<std::uint8_t> encode_classifiers(const std::vector<nn::DenseNet>& nets) {
    std::vector<std::uint8_t> payload;
    for (const auto& net : nets) {
        for (const auto* tensor : net.param_ptrs()) {
            append_le_u32(payload, static_cast<std::uint32_t>(tensor->rows()));
            append_le_u32(payload, static_cast<std::uint32_t>(tensor->cols()));
            for (double v : tensor->values()) append_le_f32(payload, static_cast<float>(v));
        }
    }
    return payload;
}

void decode_classifiers_into(const std::vector<std::uint8_t>& payload,
                             std::vector<nn::DenseNet>& nets) {
    std::size_t offset = 0;
    for (auto& net : nets) {
        for (auto* tensor : net.param_ptrs()) {
            const std::uint32_t rows = read_le_u32(payload, offset);
            const std::uint32_t cols = read_le_u32(payload, offset);
            if (rows != tensor->rows() || cols != tensor->cols())
                throw ProtocolError("classifier payload: tensor shape mismatch");
            for (auto& v : tensor->values())
                v = static_cast<double>(read_le_f32(payload, offset));
        }
    }
    if (offset != payload.size()) throw ProtocolError("classifier payload: trailing bytes");
}

std::vector<std::string> describe_payload_fields(const RoundMessage& message) {
    std::vector<std::string> fields;
    if (message.direction == Direction::kClientToAggregator) {
        const SanitizedBatch batch = decode_sanitized_batch(message.payload);
        fields.push_back("z[" + std::to_string(batch.z.rows()) + "x" +
                         std::to_string(batch.z.cols()) + "]");
        for (std::size_t j = 0; j < batch.u.size(); ++j)
            fields.push_back("u" + std::to_string(j) + "[" + std::to_string(batch.u[j].size()) +
                             "]");
    } else {
        std::size_t offset = 0;
        std::size_t index = 0;
        while (offset < message.payload.size()) {
            const std::uint32_t rows = read_le_u32(message.payload, offset);
            const std::uint32_t cols = read_le_u32(message.payload, offset);
            offset += 4ull * rows * cols;
            if (offset > message.payload.size())
                throw ProtocolError("classifier payload: truncated tensor");
            fields.push_back("psi_tensor" + std::to_string(index++) + "[" +
                             std::to_string(rows) + "x" + std::to_string(cols) + "]");
        }
    }
    return fields;
}

void run_round(std::vector<ClientState>& clients, AggregatorState& aggregator,
               const FederatedConfig& cfg, std::uint32_t round_index, CommLedger& ledger,
               std::vector<RoundMessage>* message_log) {
    if (clients.empty()) throw ConfigError("run_round: no clients");
    LedgerEntry entry;
    entry.round = round_index;
    entry.uplink_bytes.assign(clients.size(), 0);
    entry.downlink_bytes.assign(clients.size(), 0);

    // Phase 1: each client encodes a fresh mini-batch and uplinks (z, u)
    aggregator.pool.clear();
    for (std::size_t m = 0; m < clients.size(); ++m) {
        ClientState& client = clients[m];
        const auto idx = sample_batch(client.shard.size(), cfg.batch_size, client.rng);
        const RealMatrix xb = gather_rows(client.shard.x, idx);
        auto [mu, logvar] = encoder::encode(client.enc, xb);
        const encoder::LatentSample sample = encoder::reparameterize(mu, logvar, client.rng);

        SanitizedBatch batch;
        batch.z = sample.z;
        batch.u.resize(client.shard.u.size());
        for (std::size_t j = 0; j < client.shard.u.size(); ++j) {
            batch.u[j].reserve(idx.size());
            for (std::size_t i : idx) batch.u[j].push_back(client.shard.u[j][i]);
        }

        RoundMessage msg;
        msg.direction = Direction::kClientToAggregator;
        msg.round = round_index;
        msg.client_id = client.id;
        msg.payload = encode_sanitized_batch(batch);
        const std::vector<std::uint8_t> wire = msg.serialize();
        entry.uplink_bytes[m] = wire.size();

        const RoundMessage received = RoundMessage::parse(wire);
        aggregator.pool.push_back(decode_sanitized_batch(received.payload));
        if (message_log) message_log->push_back(std::move(msg));
    }

    // Phase 2: k utility-classifier steps on the pooled sanitized data
    std::size_t pooled_rows = 0;
    for (const auto& batch : aggregator.pool) pooled_rows += batch.z.rows();
    RealMatrix pooled_z(pooled_rows, cfg.d_z);
    std::vector<std::vector<int>> pooled_u(aggregator.psi.size(), std::vector<int>());
    {
        std::size_t row = 0;
        for (const auto& batch : aggregator.pool) {
            if (batch.z.cols() != cfg.d_z) throw ProtocolError("run_round: d_z mismatch in pool");
            for (std::size_t r = 0; r < batch.z.rows(); ++r, ++row)
                std::copy(batch.z.row(r), batch.z.row(r) + batch.z.cols(), pooled_z.row(row));
            for (std::size_t j = 0; j < pooled_u.size(); ++j)
                pooled_u[j].insert(pooled_u[j].end(), batch.u[j].begin(), batch.u[j].end());
        }
    }
    for (std::size_t step = 0; step < cfg.classifier_steps; ++step) {
        for (std::size_t j = 0; j < aggregator.psi.size(); ++j) {
            auto res = objective::utility_classifier_loss(pooled_z, pooled_u[j],
                                                          aggregator.psi[j]);
            nn::adam_step(aggregator.psi[j], res.classifier_grads, aggregator.psi_adam[j],
                          cfg.lr);
        }
    }
    aggregator.pool.clear();  // per-round pool, not a growing replay buffer

    // Broadcast psi
    const std::vector<std::uint8_t> psi_payload = encode_classifiers(aggregator.psi);
    for (std::size_t m = 0; m < clients.size(); ++m) {
        RoundMessage msg;
        msg.direction = Direction::kAggregatorToClient;
        msg.round = round_index;
        msg.client_id = clients[m].id;
        msg.payload = psi_payload;
        const std::vector<std::uint8_t> wire = msg.serialize();
        entry.downlink_bytes[m] = wire.size();
        const RoundMessage received = RoundMessage::parse(wire);
        decode_classifiers_into(received.payload, clients[m].utility_classifiers);
        if (message_log) message_log->push_back(std::move(msg));
    }

    // Phase 3: k local adversary steps, then one encoder step per client
    for (std::size_t m = 0; m < clients.size(); ++m) {
        ClientState& client = clients[m];
        for (std::size_t step = 0; step < cfg.classifier_steps; ++step) {
            const auto idx = sample_batch(client.shard.size(), cfg.batch_size, client.rng);
            const RealMatrix xb = gather_rows(client.shard.x, idx);
            auto [mu, logvar] = encoder::encode(client.enc, xb);
            const encoder::LatentSample sample =
                encoder::reparameterize(mu, logvar, client.rng);
            for (std::size_t j = 0; j < client.adversaries.size(); ++j) {
                std::vector<int> sb;
                sb.reserve(idx.size());
                for (std::size_t i : idx) sb.push_back(client.shard.s[j][i]);
                auto res = objective::adversary_classifier_loss(sample.z, sb,
                                                                client.adversaries[j]);
                nn::adam_step(client.adversaries[j], res.classifier_grads, client.adv_adam[j],
                              cfg.lr);
            }
        }
        // encoder update on its own fresh mini-batch, classifiers frozen
        const auto idx = sample_batch(client.shard.size(), cfg.batch_size, client.rng);
        const RealMatrix xb = gather_rows(client.shard.x, idx);
        auto [mu, logvar] = encoder::encode(client.enc, xb);
        const encoder::LatentSample sample = encoder::reparameterize(mu, logvar, client.rng);
        std::vector<std::vector<int>> u_batch(client.shard.u.size());
        std::vector<std::vector<int>> s_batch(client.shard.s.size());
        for (std::size_t j = 0; j < client.shard.u.size(); ++j)
            for (std::size_t i : idx) u_batch[j].push_back(client.shard.u[j][i]);
        for (std::size_t j = 0; j < client.shard.s.size(); ++j)
            for (std::size_t i : idx) s_batch[j].push_back(client.shard.s[j][i]);

        const objective::GppLossConfig loss_cfg{client.beta, client.lambda};
        objective::EncoderLossResult loss =
            objective::encoder_loss(sample, u_batch, s_batch, client.utility_classifiers,
                                    client.adversaries, loss_cfg);
        encoder::EncoderGradients grads =
            encoder::encoder_backward(client.enc, xb, loss.mu_grad, loss.logvar_grad);
        nn::adam_step(client.enc.param_ptrs(), grads.ptrs(), client.enc_adam, cfg.lr);
    }

    for (std::size_t m = 0; m < clients.size(); ++m) {
        ledger.total_uplink += entry.uplink_bytes[m];
        ledger.total_downlink += entry.downlink_bytes[m];
    }
    ledger.rounds.push_back(std::move(entry));
}

ProtocolResult run_protocol(const data::LabeledDataset& dataset,
                            const std::vector<data::Shard>& shards, const FederatedConfig& cfg) {
    if (shards.empty()) throw ConfigError("run_protocol: no shards");
    dataset.validate();
    // horizontal partition: shards must be pairwise disjoint
    {
        std::vector<bool> seen(dataset.size(), false);
        for (const auto& shard : shards) {
            if (shard.indices.empty()) throw ConfigError("run_protocol: empty shard");
            for (std::size_t i : shard.indices) {
                if (i >= dataset.size() || seen[i])
                    throw ConfigError("run_protocol: shards are not a disjoint partition");
                seen[i] = true;
            }
        }
    }

    ProtocolResult result;
    Rng agg_rng(cfg.seed);
    for (std::size_t j = 0; j < dataset.u.size(); ++j) {
        result.aggregator.psi.push_back(
            nn::make_mlp(cfg.d_z, cfg.classifier_hidden,
                         static_cast<std::size_t>(dataset.u_cardinality[j]),
                         nn::Activation::kSoftmax));
        nn::init_xavier(result.aggregator.psi.back(), agg_rng);
        result.aggregator.psi_adam.push_back(nn::AdamState::like(result.aggregator.psi.back()));
    }

    for (std::size_t m = 0; m < shards.size(); ++m) {
        ClientState client;
        client.id = shards[m].client_id;
        client.shard = dataset.subset(shards[m].indices);
        if (client.shard.size() < cfg.batch_size)
            throw ConfigError("run_protocol: shard " + std::to_string(m) +
                              " smaller than the batch size");
        client.beta = cfg.beta_for(m);
        client.lambda = cfg.lambda_for(m);
        client.rng = Rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (m + 1)));
        client.enc = encoder::make_encoder(dataset.feature_dim(), cfg.encoder_hidden, cfg.d_z,
                                           client.rng);
        client.enc_adam = nn::AdamState::like(
            static_cast<const encoder::GaussianEncoderParams&>(client.enc).param_ptrs());
        for (std::size_t j = 0; j < dataset.s.size(); ++j) {
            client.adversaries.push_back(
                nn::make_mlp(cfg.d_z, cfg.classifier_hidden,
                             static_cast<std::size_t>(dataset.s_cardinality[j]),
                             nn::Activation::kSoftmax));
            nn::init_xavier(client.adversaries.back(), client.rng);
            client.adv_adam.push_back(nn::AdamState::like(client.adversaries.back()));
        }
        // local psi copies receive the broadcast; shapes fixed here
        for (std::size_t j = 0; j < dataset.u.size(); ++j) {
            client.utility_classifiers.push_back(
                nn::make_mlp(cfg.d_z, cfg.classifier_hidden,
                             static_cast<std::size_t>(dataset.u_cardinality[j]),
                             nn::Activation::kSoftmax));
        }
        result.clients.push_back(std::move(client));
    }

    for (std::uint32_t r = 0; r < cfg.rounds; ++r) {
        run_round(result.clients, result.aggregator, cfg, r, result.ledger,
                  cfg.keep_message_log ? &result.message_log : nullptr);
    }
    return result;
}

CommCost comm_cost(std::size_t b, std::size_t d_z, std::size_t d_u,
                   std::size_t bytes_per_scalar) {
    CommCost cost;
    cost.scalars = static_cast<std::uint64_t>(b) * (d_z + d_u);
    cost.bytes = cost.scalars * bytes_per_scalar;
    return cost;
}

CrossoverResult crossover_check(std::size_t b, std::size_t d_z, std::size_t d_u,
                                std::size_t encoder_param_count) {
    if (b == 0 || d_z + d_u == 0 || encoder_param_count == 0)
        throw DomainError("crossover_check: inputs must be positive");
    CrossoverResult result;
    result.ratio = static_cast<double>(encoder_param_count) /
                   static_cast<double>(b * (d_z + d_u));
    result.gpp_cheaper = result.ratio > 1.0;
    return result;
}

PrivacyBound distributed_privacy_bound(double epsilon, double delta) {
    if (epsilon < 0.0 || delta < 0.0)
        throw DomainError("distributed_privacy_bound: epsilon and delta must be >= 0");
    PrivacyBound bound;
    bound.bound = epsilon + delta;
    bound.assumptions = {
        "A1: client datasets are mutually independent",
        "A2: the aggregator is honest-but-curious",
        "A3: clients transmit only sanitized representations and utility labels",
    };
    return bound;
}

}  // namespace gpp::federated
