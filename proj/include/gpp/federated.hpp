#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gpp/data.hpp"
#include "gpp/encoder.hpp"
#include "gpp/nn.hpp"
#include "gpp/rng.hpp"

namespace gpp::federated {

// The only payload a client ever releases: latent draws and utility labels.
// Raw features and sensitive labels have no field here, so they cannot be
// serialized by construction.
struct SanitizedBatch {
    RealMatrix z;                     // batch x d_z
    std::vector<std::vector<int>> u;  // d_u attributes, each of length batch
};

enum class Direction : std::uint8_t {
    kClientToAggregator = 0,
    kAggregatorToClient = 1,
};

// Wire format: header {u8 direction, u32 round, u32 client_id,
// u32 payload_len}, little-endian, then the payload bytes. Uplink payload is
// {u32 batch, u32 d_z, u32 d_u, batch*d_z f32 z, batch*d_u f32 u}; downlink
// is the utility classifier tensors in declared layer order, each prefixed
// by {u32 rows, u32 cols}. Scalars travel as f32.
struct RoundMessage {
    Direction direction = Direction::kClientToAggregator;
    std::uint32_t round = 0;
    std::uint32_t client_id = 0;
    std::vector<std::uint8_t> payload;

    std::size_t byte_size() const { return 13 + payload.size(); }
    std::vector<std::uint8_t> serialize() const;
    static RoundMessage parse(const std::vector<std::uint8_t>& bytes);
};

std::vector<std::uint8_t> encode_sanitized_batch(const SanitizedBatch& batch);
SanitizedBatch decode_sanitized_batch(const std::vector<std::uint8_t>& payload);

std::vector<std::uint8_t> encode_classifiers(const std::vector<nn::DenseNet>& nets);
// Overwrites the tensor values of `nets` (shapes must already match).
void decode_classifiers_into(const std::vector<std::uint8_t>& payload,
                             std::vector<nn::DenseNet>& nets);

// Names of the fields a parsed message carries, for leakage introspection.
std::vector<std::string> describe_payload_fields(const RoundMessage& message);

struct ClientState {
    std::uint32_t id = 0;
    data::LabeledDataset shard;
    encoder::GaussianEncoderParams enc;            // theta_m
    std::vector<nn::DenseNet> adversaries;         // phi^(m), never leaves the client
    std::vector<nn::DenseNet> utility_classifiers; // local copy of the broadcast psi
    nn::AdamState enc_adam;
    std::vector<nn::AdamState> adv_adam;
    double beta = 1.0;
    double lambda = 0.01;
    Rng rng{0};
};

struct AggregatorState {
    std::vector<nn::DenseNet> psi;
    std::vector<nn::AdamState> psi_adam;
    std::vector<SanitizedBatch> pool;  // current round only, discarded after phase 2
};

struct LedgerEntry {
    std::uint32_t round = 0;
    std::vector<std::uint64_t> uplink_bytes;    // per client
    std::vector<std::uint64_t> downlink_bytes;  // per client
};

struct CommLedger {
    std::vector<LedgerEntry> rounds;
    std::uint64_t total_uplink = 0;
    std::uint64_t total_downlink = 0;
};

struct FederatedConfig {
    std::size_t batch_size = 64;
    std::size_t classifier_steps = 2;  // k
    double lr = 1e-4;
    std::size_t rounds = 1;  // R
    std::size_t d_z = 16;
    std::vector<std::size_t> encoder_hidden = {512, 256};
    std::vector<std::size_t> classifier_hidden = {256, 128};
    std::uint64_t seed = 0;
    // Client-specific trade-off parameters; broadcast scalar when size 1.
    std::vector<double> beta = {1.0};
    std::vector<double> lambda = {0.01};
    bool keep_message_log = false;

    double beta_for(std::size_t m) const { return beta.size() == 1 ? beta[0] : beta.at(m); }
    double lambda_for(std::size_t m) const {
        return lambda.size() == 1 ? lambda[0] : lambda.at(m);
    }
};

struct ProtocolResult {
    std::vector<ClientState> clients;
    AggregatorState aggregator;
    CommLedger ledger;
    std::vector<RoundMessage> message_log;  // populated when keep_message_log
};

// One communication round: phase 1 uplinks sanitized batches, phase 2 runs k
// utility-classifier steps on the pooled batch and broadcasts psi, phase 3
// runs k local adversary steps and one encoder step per client.
void run_round(std::vector<ClientState>& clients, AggregatorState& aggregator,
               const FederatedConfig& cfg, std::uint32_t round_index, CommLedger& ledger,
               std::vector<RoundMessage>* message_log = nullptr);

// Initializes all parties from disjoint shards and runs R rounds.
ProtocolResult run_protocol(const data::LabeledDataset& dataset,
                            const std::vector<data::Shard>& shards, const FederatedConfig& cfg);

struct CommCost {
    std::uint64_t scalars = 0;  // b * (d_z + d_u)
    std::uint64_t bytes = 0;
};

CommCost comm_cost(std::size_t b, std::size_t d_z, std::size_t d_u,
                   std::size_t bytes_per_scalar);

struct CrossoverResult {
    double ratio = 0.0;  // |theta| / (b (d_z + d_u))
    bool gpp_cheaper = false;
};

CrossoverResult crossover_check(std::size_t b, std::size_t d_z, std::size_t d_u,
                                std::size_t encoder_param_count);

struct PrivacyBound {
    double bound = 0.0;  // epsilon + delta
    std::array<std::string, 3> assumptions;
};

// Upper bound on what the pooled round traffic reveals about one client's
// sensitive attribute: epsilon + delta under independent client data, an
// honest-but-curious aggregator, and sanitized-only transmission.
PrivacyBound distributed_privacy_bound(double epsilon, double delta);

}  // namespace gpp::federated
