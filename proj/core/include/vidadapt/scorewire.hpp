#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vidadapt/adapter.hpp"
#include "vidadapt/denoiser.hpp"
#include "vidadapt/tensor.hpp"

namespace vad::wire {

// Wire framing: magic(4) | version u32 BE | payload length u32 BE | payload.
// Request magic "VSRQ", response magic "VSRS". Integers in frame headers and
// payload fields are big-endian; float payloads are little-endian float32
// bits, so served predictions round-trip bit-exactly.
inline constexpr char kRequestMagic[4] = {'V', 'S', 'R', 'Q'};
inline constexpr char kResponseMagic[4] = {'V', 'S', 'R', 'S'};
inline constexpr uint32_t kVersion = 1;
inline constexpr uint32_t kMaxPayload = 1u << 26;

enum class Status : uint8_t {
    kOk = 0,
    kUnknownModel = 1,
    kBadShape = 2,
    kBadStep = 3,
    kInternal = 4,
};
const char* status_name(Status s);

// Request payload layout:
//   u8 model_id_len | model_id bytes | u32 step | u8 cond_flags
//   (bit0 has_label, bit1 is_null, bit2 has_aux) | [u32 label_id]
//   | u8 ndims(=4) | u32 dims[4] | [u8 aux_kind (1 first-frame, 2 edge),
//   u32 aux_dims[4]] | f32 sample payload | [f32 aux payload]
struct ScoreRequest {
    std::string model_id;
    uint32_t step = 0;
    bool has_label = false;
    bool is_null = false;
    uint32_t label_id = 0;
    VideoShape dims;
    uint8_t aux_kind = 0;
    VideoShape aux_dims;
    std::vector<float> payload;
    std::vector<float> aux_payload;
};

// Response payload: u8 status | on ok, f32 eps payload (request dims
// product) | on error, u16 diag length + diagnostic bytes.
struct ScoreResponse {
    Status status = Status::kOk;
    std::vector<float> payload;
    std::string diagnostic;
};

std::vector<uint8_t> encode_request(const ScoreRequest& req);
ScoreRequest decode_request(std::span<const uint8_t> payload);  // throws on malformed input
std::vector<uint8_t> encode_response(const ScoreResponse& resp);
ScoreResponse decode_response(std::span<const uint8_t> payload);
std::vector<uint8_t> frame(const char magic[4], std::span<const uint8_t> payload);

ScoreRequest build_request(const std::string& model_id, const NoisySample& sample,
                           const ConditionSpec& cond);

// Serves frozen checkpoints over a reliable stream; parameters are immutable
// after load. One request per frame, synchronous per connection; concurrent
// connections share the read-only checkpoints without locks. Malformed
// frames yield an error response (and a disconnect when the stream cannot
// be resynchronized).
class ScoreServer {
public:
    ScoreServer(std::map<std::string, DenoiserCheckpoint> checkpoints, const std::string& host,
                int port);
    ~ScoreServer();
    ScoreServer(const ScoreServer&) = delete;
    ScoreServer& operator=(const ScoreServer&) = delete;

    int port() const;      // actual bound port (useful with port 0)
    void stop();           // drains in-flight requests, then joins

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct WireError : std::runtime_error {
    Status status;
    WireError(Status s, const std::string& msg)
        : std::runtime_error(msg), status(s) {}
};

class ScoreClient {
public:
    ScoreClient(const std::string& host, int port, double timeout_seconds = 30.0);
    ~ScoreClient();
    ScoreClient(const ScoreClient&) = delete;
    ScoreClient& operator=(const ScoreClient&) = delete;

    // Blocks for the response; error statuses surface as WireError,
    // transport failures and timeouts as std::runtime_error.
    std::vector<float> remote_eps(const std::string& model_id, const NoisySample& sample,
                                  const ConditionSpec& cond);

private:
    int fd_ = -1;
};

// A ScoreSource backed by a remote prior; satisfies the contract used by
// composed_sample.
ScoreSource make_remote_source(std::shared_ptr<ScoreClient> client, std::string model_id);

}  // namespace vad::wire
