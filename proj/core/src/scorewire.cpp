#include "vidadapt/scorewire.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <bit>
#include <cstring>
#include <mutex>
#include <thread>

namespace vad::wire {

namespace {

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_f32le(std::vector<uint8_t>& out, std::span<const float> values) {
    for (float f : values) {
        uint32_t bits = std::bit_cast<uint32_t>(f);
        out.push_back(static_cast<uint8_t>(bits));
        out.push_back(static_cast<uint8_t>(bits >> 8));
        out.push_back(static_cast<uint8_t>(bits >> 16));
        out.push_back(static_cast<uint8_t>(bits >> 24));
    }
}

struct Reader {
    std::span<const uint8_t> buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("truncated payload");
    }
    uint8_t u8() {
        need(1);
        return buf[pos++];
    }
    uint32_t u32be() {
        need(4);
        uint32_t v = (static_cast<uint32_t>(buf[pos]) << 24) |
                     (static_cast<uint32_t>(buf[pos + 1]) << 16) |
                     (static_cast<uint32_t>(buf[pos + 2]) << 8) | buf[pos + 3];
        pos += 4;
        return v;
    }
    uint16_t u16be() {
        need(2);
        uint16_t v = static_cast<uint16_t>((buf[pos] << 8) | buf[pos + 1]);
        pos += 2;
        return v;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
    void f32le(std::span<float> out) {
        need(4 * out.size());
        for (float& f : out) {
            uint32_t bits = static_cast<uint32_t>(buf[pos]) |
                            (static_cast<uint32_t>(buf[pos + 1]) << 8) |
                            (static_cast<uint32_t>(buf[pos + 2]) << 16) |
                            (static_cast<uint32_t>(buf[pos + 3]) << 24);
            f = std::bit_cast<float>(bits);
            pos += 4;
        }
    }
    void done() const {
        if (pos != buf.size()) throw std::runtime_error("trailing bytes in payload");
    }
};

VideoShape read_dims(Reader& r) {
    VideoShape s;
    s.frames = static_cast<int>(r.u32be());
    s.height = static_cast<int>(r.u32be());
    s.width = static_cast<int>(r.u32be());
    s.channels = static_cast<int>(r.u32be());
    if (!s.valid() || static_cast<int64_t>(s.frames) * s.height * s.width * s.channels >
                          static_cast<int64_t>(kMaxPayload / 4))
        throw std::runtime_error("unreasonable tensor dims");
    return s;
}

void put_dims(std::vector<uint8_t>& out, const VideoShape& s) {
    put_u32be(out, static_cast<uint32_t>(s.frames));
    put_u32be(out, static_cast<uint32_t>(s.height));
    put_u32be(out, static_cast<uint32_t>(s.width));
    put_u32be(out, static_cast<uint32_t>(s.channels));
}

bool write_all(int fd, const uint8_t* data, size_t n) {
    while (n > 0) {
        ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
        if (w <= 0) return false;
        data += w;
        n -= static_cast<size_t>(w);
    }
    return true;
}

// returns bytes read; 0 on orderly EOF at a frame boundary, -1 on error
int read_all(int fd, uint8_t* data, size_t n) {
    size_t got = 0;
    while (got < n) {
        ssize_t r = ::recv(fd, data + got, n - got, 0);
        if (r == 0) return got == 0 ? 0 : -1;
        if (r < 0) return -1;
        got += static_cast<size_t>(r);
    }
    return static_cast<int>(n);
}

}  // namespace

const char* status_name(Status s) {
    switch (s) {
        case Status::kOk: return "ok";
        case Status::kUnknownModel: return "unknown-model";
        case Status::kBadShape: return "bad-shape";
        case Status::kBadStep: return "bad-step";
        case Status::kInternal: return "internal";
    }
    return "?";
}

std::vector<uint8_t> encode_request(const ScoreRequest& req) {
    if (req.model_id.size() > 255) throw std::invalid_argument("model id too long");
    std::vector<uint8_t> out;
    out.push_back(static_cast<uint8_t>(req.model_id.size()));
    out.insert(out.end(), req.model_id.begin(), req.model_id.end());
    put_u32be(out, req.step);
    uint8_t flags = (req.has_label ? 1 : 0) | (req.is_null ? 2 : 0) | (req.aux_kind ? 4 : 0);
    out.push_back(flags);
    if (req.has_label) put_u32be(out, req.label_id);
    out.push_back(4);
    put_dims(out, req.dims);
    if (req.aux_kind) {
        out.push_back(req.aux_kind);
        put_dims(out, req.aux_dims);
    }
    put_f32le(out, req.payload);
    if (req.aux_kind) put_f32le(out, req.aux_payload);
    return out;
}

ScoreRequest decode_request(std::span<const uint8_t> payload) {
    Reader r{payload};
    ScoreRequest req;
    req.model_id = r.bytes(r.u8());
    req.step = r.u32be();
    uint8_t flags = r.u8();
    req.has_label = flags & 1;
    req.is_null = flags & 2;
    bool has_aux = flags & 4;
    if (req.has_label && req.is_null)
        throw std::runtime_error("condition flags: is_null excludes label");
    if (req.has_label) req.label_id = r.u32be();
    if (r.u8() != 4) throw std::runtime_error("expected 4 tensor dims");
    req.dims = read_dims(r);
    if (has_aux) {
        req.aux_kind = r.u8();
        if (req.aux_kind != 1 && req.aux_kind != 2)
            throw std::runtime_error("unknown aux condition kind");
        req.aux_dims = read_dims(r);
    }
    req.payload.resize(static_cast<size_t>(req.dims.num_elements()));
    r.f32le(req.payload);
    if (has_aux) {
        req.aux_payload.resize(static_cast<size_t>(req.aux_dims.num_elements()));
        r.f32le(req.aux_payload);
    }
    r.done();
    return req;
}

std::vector<uint8_t> encode_response(const ScoreResponse& resp) {
    std::vector<uint8_t> out;
    out.push_back(static_cast<uint8_t>(resp.status));
    if (resp.status == Status::kOk) {
        put_f32le(out, resp.payload);
    } else {
        std::string diag = resp.diagnostic.substr(0, 65535);
        out.push_back(static_cast<uint8_t>(diag.size() >> 8));
        out.push_back(static_cast<uint8_t>(diag.size()));
        out.insert(out.end(), diag.begin(), diag.end());
    }
    return out;
}

ScoreResponse decode_response(std::span<const uint8_t> payload) {
    Reader r{payload};
    ScoreResponse resp;
    uint8_t st = r.u8();
    if (st > 4) throw std::runtime_error("unknown response status");
    resp.status = static_cast<Status>(st);
    if (resp.status == Status::kOk) {
        size_t remaining = payload.size() - r.pos;
        if (remaining % 4 != 0) throw std::runtime_error("ok payload not float-aligned");
        resp.payload.resize(remaining / 4);
        r.f32le(resp.payload);
    } else {
        uint16_t len = r.u16be();
        resp.diagnostic = r.bytes(len);
    }
    r.done();
    return resp;
}

std::vector<uint8_t> frame(const char magic[4], std::span<const uint8_t> payload) {
    if (payload.size() > kMaxPayload) throw std::runtime_error("payload exceeds frame limit");
    std::vector<uint8_t> out;
    out.reserve(12 + payload.size());
    out.insert(out.end(), magic, magic + 4);
    put_u32be(out, kVersion);
    put_u32be(out, static_cast<uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

ScoreRequest build_request(const std::string& model_id, const NoisySample& sample,
                           const ConditionSpec& cond) {
    ScoreRequest req;
    req.model_id = model_id;
    req.step = static_cast<uint32_t>(sample.step);
    req.is_null = cond.is_null;
    if (cond.label_id) {
        req.has_label = true;
        req.label_id = static_cast<uint32_t>(*cond.label_id);
    }
    req.dims = sample.tensor.shape;
    req.payload = sample.tensor.data;
    if (cond.first_frame) {
        req.aux_kind = 1;
        req.aux_dims = cond.first_frame->shape;
        req.aux_payload = cond.first_frame->data;
    } else if (cond.edge_video) {
        req.aux_kind = 2;
        req.aux_dims = cond.edge_video->shape;
        req.aux_payload = cond.edge_video->data;
    }
    return req;
}

// ---------------------------------------------------------------- server

struct ScoreServer::Impl {
    std::map<std::string, DenoiserCheckpoint> checkpoints;
    int listen_fd = -1;
    int bound_port = 0;
    std::atomic<bool> running{true};
    std::thread accept_thread;
    std::mutex conn_mutex;
    std::vector<int> conn_fds;
    std::vector<std::thread> workers;

    ScoreResponse handle(const ScoreRequest& req) const {
        ScoreResponse resp;
        auto it = checkpoints.find(req.model_id);
        if (it == checkpoints.end()) {
            resp.status = Status::kUnknownModel;
            resp.diagnostic = "no model named '" + req.model_id + "'";
            return resp;
        }
        const DenoiserCheckpoint& ckpt = it->second;
        if (req.step < 1 || static_cast<int>(req.step) > ckpt.schedule.num_steps) {
            resp.status = Status::kBadStep;
            resp.diagnostic = "step " + std::to_string(req.step) + " outside served schedule [1," +
                              std::to_string(ckpt.schedule.num_steps) + "]";
            return resp;
        }
        NoisySample sample;
        sample.step = static_cast<int>(req.step);
        sample.tensor.shape = req.dims;
        sample.tensor.data = req.payload;
        ConditionSpec cond;
        cond.is_null = req.is_null;
        if (req.has_label) cond.label_id = static_cast<int>(req.label_id);
        if (req.aux_kind == 1) {
            VideoTensor ff;
            ff.shape = req.aux_dims;
            ff.data = req.aux_payload;
            cond.first_frame = std::move(ff);
        } else if (req.aux_kind == 2) {
            VideoTensor ev;
            ev.shape = req.aux_dims;
            ev.data = req.aux_payload;
            cond.edge_video = std::move(ev);
        }
        try {
            resp.payload = predict_eps(ckpt, sample, cond);
            resp.status = Status::kOk;
        } catch (const std::invalid_argument& e) {
            resp.status = Status::kBadShape;
            resp.diagnostic = e.what();
        } catch (const std::exception& e) {
            resp.status = Status::kInternal;
            resp.diagnostic = e.what();
        }
        return resp;
    }

    void serve_connection(int fd) {
        while (running.load()) {
            uint8_t head[12];
            int r = read_all(fd, head, sizeof head);
            if (r <= 0) break;  // EOF or error: clean disconnect
            ScoreResponse resp;
            bool resync_lost = false;
            std::vector<uint8_t> payload;
            if (std::memcmp(head, kRequestMagic, 4) != 0) {
                resp.status = Status::kBadShape;
                resp.diagnostic = "bad frame magic";
                resync_lost = true;
            } else {
                uint32_t version = (static_cast<uint32_t>(head[4]) << 24) |
                                   (static_cast<uint32_t>(head[5]) << 16) |
                                   (static_cast<uint32_t>(head[6]) << 8) | head[7];
                uint32_t len = (static_cast<uint32_t>(head[8]) << 24) |
                               (static_cast<uint32_t>(head[9]) << 16) |
                               (static_cast<uint32_t>(head[10]) << 8) | head[11];
                if (version != kVersion) {
                    resp.status = Status::kBadShape;
                    resp.diagnostic = "unsupported protocol version";
                    resync_lost = true;
                } else if (len > kMaxPayload) {
                    resp.status = Status::kBadShape;
                    resp.diagnostic = "frame length exceeds limit";
                    resync_lost = true;
                } else {
                    payload.resize(len);
                    if (len > 0 && read_all(fd, payload.data(), len) <= 0) break;
                    try {
                        resp = handle(decode_request(payload));
                    } catch (const std::exception& e) {
                        // malformed request payload: frame boundary is still
                        // intact, connection stays open
                        resp.status = Status::kBadShape;
                        resp.diagnostic = e.what();
                    }
                }
            }
            std::vector<uint8_t> out = frame(kResponseMagic, encode_response(resp));
            if (!write_all(fd, out.data(), out.size())) break;
            if (resync_lost) break;
        }
        ::close(fd);
    }
};

ScoreServer::ScoreServer(std::map<std::string, DenoiserCheckpoint> checkpoints,
                         const std::string& host, int port)
    : impl_(std::make_unique<Impl>()) {
    for (const auto& [name, ckpt] : checkpoints) ckpt.descriptor.validate();
    impl_->checkpoints = std::move(checkpoints);

    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw std::runtime_error("scorewire: socket() failed");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw std::runtime_error("scorewire: bad bind address " + host);
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(fd);
        throw std::runtime_error("scorewire: bind failed on " + host + ":" +
                                 std::to_string(port));
    }
    if (::listen(fd, 64) != 0) {
        ::close(fd);
        throw std::runtime_error("scorewire: listen failed");
    }
    sockaddr_in bound{};
    socklen_t blen = sizeof bound;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &blen);
    impl_->bound_port = ntohs(bound.sin_port);
    impl_->listen_fd = fd;

    impl_->accept_thread = std::thread([impl = impl_.get()] {
        while (impl->running.load()) {
            int conn = ::accept(impl->listen_fd, nullptr, nullptr);
            if (conn < 0) {
                if (!impl->running.load()) break;
                continue;
            }
            int one2 = 1;
            ::setsockopt(conn, IPPROTO_TCP, TCP_NODELAY, &one2, sizeof one2);
            std::lock_guard<std::mutex> lock(impl->conn_mutex);
            impl->conn_fds.push_back(conn);
            impl->workers.emplace_back([impl, conn] { impl->serve_connection(conn); });
        }
    });
}

int ScoreServer::port() const { return impl_->bound_port; }

void ScoreServer::stop() {
    if (!impl_ || !impl_->running.exchange(false)) return;
    ::shutdown(impl_->listen_fd, SHUT_RDWR);
    ::close(impl_->listen_fd);
    if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
    {
        // unblock reads; in-flight responses still complete before the
        // worker loop exits
        std::lock_guard<std::mutex> lock(impl_->conn_mutex);
        for (int fd : impl_->conn_fds) ::shutdown(fd, SHUT_RD);
    }
    for (auto& w : impl_->workers)
        if (w.joinable()) w.join();
}

ScoreServer::~ScoreServer() {
    try {
        stop();
    } catch (...) {
    }
}

// ---------------------------------------------------------------- client

ScoreClient::ScoreClient(const std::string& host, int port, double timeout_seconds) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error("scorewire client: socket() failed");
    timeval tv{};
    tv.tv_sec = static_cast<long>(timeout_seconds);
    tv.tv_usec = static_cast<long>((timeout_seconds - tv.tv_sec) * 1e6);
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        fd_ = -1;
        throw std::runtime_error("scorewire client: bad host " + host);
    }
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw std::runtime_error("scorewire client: connect to " + host + ":" +
                                 std::to_string(port) + " failed");
    }
}

ScoreClient::~ScoreClient() {
    if (fd_ >= 0) ::close(fd_);
}

std::vector<float> ScoreClient::remote_eps(const std::string& model_id, const NoisySample& sample,
                                           const ConditionSpec& cond) {
    std::vector<uint8_t> out = frame(kRequestMagic, encode_request(build_request(model_id, sample, cond)));
    if (!write_all(fd_, out.data(), out.size()))
        throw std::runtime_error("scorewire client: send failed");
    uint8_t head[12];
    if (read_all(fd_, head, sizeof head) <= 0)
        throw std::runtime_error("scorewire client: response timeout or disconnect");
    if (std::memcmp(head, kResponseMagic, 4) != 0)
        throw std::runtime_error("scorewire client: bad response magic");
    uint32_t len = (static_cast<uint32_t>(head[8]) << 24) |
                   (static_cast<uint32_t>(head[9]) << 16) |
                   (static_cast<uint32_t>(head[10]) << 8) | head[11];
    if (len > kMaxPayload) throw std::runtime_error("scorewire client: oversized response");
    std::vector<uint8_t> payload(len);
    if (len > 0 && read_all(fd_, payload.data(), len) <= 0)
        throw std::runtime_error("scorewire client: truncated response");
    ScoreResponse resp = decode_response(payload);
    if (resp.status != Status::kOk)
        throw WireError(resp.status, std::string(status_name(resp.status)) + ": " +
                                         resp.diagnostic);
    if (resp.payload.size() != sample.tensor.data.size())
        throw std::runtime_error("scorewire client: response payload size mismatch");
    return resp.payload;
}

ScoreSource make_remote_source(std::shared_ptr<ScoreClient> client, std::string model_id) {
    ScoreSource src;
    src.has_unconditional = false;  // the remote prior is queried with conditioning only
    src.eps = [client, model_id = std::move(model_id)](const NoisySample& sample,
                                                       const ConditionSpec& cond) {
        return client->remote_eps(model_id, sample, cond);
    };
    return src;
}

}  // namespace vad::wire
