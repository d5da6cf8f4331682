#include "vidadapt/nets.hpp"

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

namespace vad {

namespace {

template <typename S>
S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

template <typename S>
S silu(S x) {
    return x * sigmoid(x);
}

template <typename S>
S silu_deriv(S x) {
    S s = sigmoid(x);
    return s * (S(1) + x * (S(1) - s));
}

// Sinusoidal features of the integer step index.
template <typename S>
void time_features(int t, int dim, S* out) {
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::pow(10000.0, -static_cast<double>(i) / half);
        out[2 * i] = static_cast<S>(std::sin(t * freq));
        out[2 * i + 1] = static_cast<S>(std::cos(t * freq));
    }
}

// ---------------------------------------------------------------- layouts

struct MlpLayout {
    int D, Et, Ec, Z, H, B, out_dim, vocab;
    int64_t embed, w_in, b_in, w_out, b_out, total;
    std::vector<int64_t> w_blk, b_blk;

    static MlpLayout make(const ArchitectureDescriptor& d) {
        MlpLayout L;
        L.D = d.input_shape.num_elements();
        L.Et = d.time_embed_dim;
        L.Ec = d.time_embed_dim;
        L.Z = L.D + L.Et + L.Ec;
        L.H = d.hidden;
        L.B = d.blocks;
        L.out_dim = d.energy_parameterized ? 1 : L.D;
        L.vocab = d.vocab_size;
        int64_t off = 0;
        L.embed = off;
        if (L.Et > 0) off += static_cast<int64_t>(L.vocab + 1) * L.Ec;
        L.w_in = off;
        off += static_cast<int64_t>(L.H) * L.Z;
        L.b_in = off;
        off += L.H;
        for (int k = 0; k < L.B; ++k) {
            L.w_blk.push_back(off);
            off += static_cast<int64_t>(L.H) * L.H;
            L.b_blk.push_back(off);
            off += L.H;
        }
        L.w_out = off;
        off += static_cast<int64_t>(L.out_dim) * L.H;
        L.b_out = off;
        off += L.out_dim;
        L.total = off;
        return L;
    }
};

struct ConvLayout {
    int C0, Cin, C, Et, B, F, Hh, Ww, vocab;
    int64_t embed, w_in, b_in, w_out, b_out, total;
    std::vector<int64_t> w_a, b_a, w_tp, b_tp, w_tc, b_tc, w_b, b_b;

    static ConvLayout make(const ArchitectureDescriptor& d) {
        ConvLayout L;
        L.C0 = d.input_shape.channels;
        L.Cin = d.input_channels();
        L.C = d.hidden;
        L.Et = d.time_embed_dim;
        L.B = d.blocks;
        L.F = d.input_shape.frames;
        L.Hh = d.input_shape.height;
        L.Ww = d.input_shape.width;
        L.vocab = d.vocab_size;
        int64_t off = 0;
        L.embed = off;
        if (L.Et > 0) off += static_cast<int64_t>(L.vocab + 1) * L.Et;
        L.w_in = off;
        off += static_cast<int64_t>(L.C) * L.Cin * 9;
        L.b_in = off;
        off += L.C;
        for (int k = 0; k < L.B; ++k) {
            L.w_a.push_back(off);
            off += static_cast<int64_t>(L.C) * L.C * 9;
            L.b_a.push_back(off);
            off += L.C;
            if (L.Et > 0) {
                L.w_tp.push_back(off);
                off += static_cast<int64_t>(L.C) * 2 * L.Et;
                L.b_tp.push_back(off);
                off += L.C;
            } else {
                L.w_tp.push_back(-1);
                L.b_tp.push_back(-1);
            }
            L.w_tc.push_back(off);
            off += static_cast<int64_t>(L.C) * L.C * 3;
            L.b_tc.push_back(off);
            off += L.C;
            L.w_b.push_back(off);
            off += static_cast<int64_t>(L.C) * L.C * 9;
            L.b_b.push_back(off);
            off += L.C;
        }
        L.w_out = off;
        off += static_cast<int64_t>(L.C0) * L.C * 9;
        L.b_out = off;
        off += L.C0;
        L.total = off;
        return L;
    }
};

// ---------------------------------------------------------------- mlp

template <typename S>
struct MlpCache {
    std::vector<S> z, u_in, h, u_blk, out;
};

template <typename S>
void mlp_forward(const MlpLayout& L, std::span<const S> p, std::span<const S> x, int t,
                 int label_row, MlpCache<S>& c) {
    c.z.assign(static_cast<size_t>(L.Z), S(0));
    for (int i = 0; i < L.D; ++i) c.z[i] = x[i];
    if (L.Et > 0) {
        time_features(t, L.Et, c.z.data() + L.D);
        const S* row = p.data() + L.embed + static_cast<int64_t>(label_row) * L.Ec;
        for (int i = 0; i < L.Ec; ++i) c.z[L.D + L.Et + i] = row[i];
    }
    c.u_in.resize(static_cast<size_t>(L.H));
    const S* w_in = p.data() + L.w_in;
    const S* b_in = p.data() + L.b_in;
    for (int i = 0; i < L.H; ++i) {
        S acc = b_in[i];
        const S* wr = w_in + static_cast<int64_t>(i) * L.Z;
        for (int j = 0; j < L.Z; ++j) acc += wr[j] * c.z[j];
        c.u_in[i] = acc;
    }
    c.h.resize(static_cast<size_t>(L.B + 1) * L.H);
    for (int i = 0; i < L.H; ++i) c.h[i] = silu(c.u_in[i]);
    c.u_blk.resize(static_cast<size_t>(L.B) * L.H);
    for (int k = 0; k < L.B; ++k) {
        const S* w = p.data() + L.w_blk[k];
        const S* b = p.data() + L.b_blk[k];
        const S* hk = c.h.data() + static_cast<size_t>(k) * L.H;
        S* u = c.u_blk.data() + static_cast<size_t>(k) * L.H;
        S* hn = c.h.data() + static_cast<size_t>(k + 1) * L.H;
        for (int i = 0; i < L.H; ++i) {
            S acc = b[i];
            const S* wr = w + static_cast<int64_t>(i) * L.H;
            for (int j = 0; j < L.H; ++j) acc += wr[j] * hk[j];
            u[i] = acc;
            hn[i] = hk[i] + silu(acc);
        }
    }
    c.out.resize(static_cast<size_t>(L.out_dim));
    const S* w_out = p.data() + L.w_out;
    const S* b_out = p.data() + L.b_out;
    const S* hb = c.h.data() + static_cast<size_t>(L.B) * L.H;
    for (int i = 0; i < L.out_dim; ++i) {
        S acc = b_out[i];
        const S* wr = w_out + static_cast<int64_t>(i) * L.H;
        for (int j = 0; j < L.H; ++j) acc += wr[j] * hb[j];
        c.out[i] = acc;
    }
}

// Backward through the MLP. `grads` (when nonempty) accumulates parameter
// gradients; `dx` (when nonempty) receives the input gradient.
template <typename S>
void mlp_backward(const MlpLayout& L, std::span<const S> p, const MlpCache<S>& c, int label_row,
                  std::span<const S> dout, std::span<S> grads, std::span<S> dx) {
    std::vector<S> gh(static_cast<size_t>(L.H), S(0));
    const S* w_out = p.data() + L.w_out;
    const S* hb = c.h.data() + static_cast<size_t>(L.B) * L.H;
    bool want_params = !grads.empty();
    for (int i = 0; i < L.out_dim; ++i) {
        const S* wr = w_out + static_cast<int64_t>(i) * L.H;
        S g = dout[i];
        if (want_params) {
            S* gw = grads.data() + L.w_out + static_cast<int64_t>(i) * L.H;
            for (int j = 0; j < L.H; ++j) gw[j] += g * hb[j];
            grads[L.b_out + i] += g;
        }
        for (int j = 0; j < L.H; ++j) gh[j] += wr[j] * g;
    }
    std::vector<S> gs(static_cast<size_t>(L.H));
    for (int k = L.B - 1; k >= 0; --k) {
        const S* u = c.u_blk.data() + static_cast<size_t>(k) * L.H;
        const S* hk = c.h.data() + static_cast<size_t>(k) * L.H;
        const S* w = p.data() + L.w_blk[k];
        for (int i = 0; i < L.H; ++i) gs[i] = gh[i] * silu_deriv(u[i]);
        if (want_params) {
            for (int i = 0; i < L.H; ++i) {
                S* gw = grads.data() + L.w_blk[k] + static_cast<int64_t>(i) * L.H;
                for (int j = 0; j < L.H; ++j) gw[j] += gs[i] * hk[j];
                grads[L.b_blk[k] + i] += gs[i];
            }
        }
        // residual: dh_k = dh_{k+1} + W^T gs
        for (int i = 0; i < L.H; ++i) {
            const S* wr = w + static_cast<int64_t>(i) * L.H;
            for (int j = 0; j < L.H; ++j) gh[j] += wr[j] * gs[i];
        }
    }
    for (int i = 0; i < L.H; ++i) gs[i] = gh[i] * silu_deriv(c.u_in[i]);
    const S* w_in = p.data() + L.w_in;
    std::vector<S> gz(static_cast<size_t>(L.Z), S(0));
    for (int i = 0; i < L.H; ++i) {
        if (want_params) {
            S* gw = grads.data() + L.w_in + static_cast<int64_t>(i) * L.Z;
            for (int j = 0; j < L.Z; ++j) gw[j] += gs[i] * c.z[j];
            grads[L.b_in + i] += gs[i];
        }
        const S* wr = w_in + static_cast<int64_t>(i) * L.Z;
        for (int j = 0; j < L.Z; ++j) gz[j] += wr[j] * gs[i];
    }
    if (want_params && L.Et > 0) {
        S* ge = grads.data() + L.embed + static_cast<int64_t>(label_row) * L.Ec;
        for (int i = 0; i < L.Ec; ++i) ge[i] += gz[L.D + L.Et + i];
    }
    if (!dx.empty())
        for (int i = 0; i < L.D; ++i) dx[i] = gz[i];
}

// ---------------------------------------------------------------- conv

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapRow = Eigen::Map<RowMat<S>>;
template <typename S>
using MapRowC = Eigen::Map<const RowMat<S>>;

// 3x3 same-padding column expansion of one (C,H,W) frame.
template <typename S>
void im2col_frame(const S* in, int C, int H, int W, Mat<S>& col) {
    col.setZero(9 * C, H * W);
    for (int ci = 0; ci < C; ++ci) {
        const S* plane = in + static_cast<int64_t>(ci) * H * W;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                int r = (ci * 3 + ky) * 3 + kx;
                for (int y = 0; y < H; ++y) {
                    int iy = y + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    for (int x = 0; x < W; ++x) {
                        int ix = x + kx - 1;
                        if (ix < 0 || ix >= W) continue;
                        col(r, y * W + x) = plane[iy * W + ix];
                    }
                }
            }
        }
    }
}

template <typename S>
void col2im_frame(const Mat<S>& col, int C, int H, int W, S* out) {
    for (int ci = 0; ci < C; ++ci) {
        S* plane = out + static_cast<int64_t>(ci) * H * W;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                int r = (ci * 3 + ky) * 3 + kx;
                for (int y = 0; y < H; ++y) {
                    int iy = y + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    for (int x = 0; x < W; ++x) {
                        int ix = x + kx - 1;
                        if (ix < 0 || ix >= W) continue;
                        plane[iy * W + ix] += col(r, y * W + x);
                    }
                }
            }
        }
    }
}

template <typename S>
void conv2d_forward(const S* in, int F, int Cin, int H, int W, const S* w, const S* b, int Cout,
                    S* out, Mat<S>& colbuf) {
    MapRowC<S> weight(w, Cout, 9 * Cin);
    int hw = H * W;
    for (int f = 0; f < F; ++f) {
        im2col_frame(in + static_cast<int64_t>(f) * Cin * hw, Cin, H, W, colbuf);
        MapRow<S> o(out + static_cast<int64_t>(f) * Cout * hw, Cout, hw);
        o.noalias() = weight * colbuf;
        for (int c = 0; c < Cout; ++c) o.row(c).array() += b[c];
    }
}

// din may be null to skip the input gradient; gw/gb may be null to skip
// parameter gradients.
template <typename S>
void conv2d_backward(const S* in, const S* dout, int F, int Cin, int H, int W, const S* w,
                     int Cout, S* din, S* gw, S* gb, Mat<S>& colbuf, Mat<S>& colgrad) {
    MapRowC<S> weight(w, Cout, 9 * Cin);
    int hw = H * W;
    if (din != nullptr) colgrad.resize(9 * Cin, hw);
    for (int f = 0; f < F; ++f) {
        MapRowC<S> go(dout + static_cast<int64_t>(f) * Cout * hw, Cout, hw);
        if (gw != nullptr) {
            im2col_frame(in + static_cast<int64_t>(f) * Cin * hw, Cin, H, W, colbuf);
            MapRow<S> gwm(gw, Cout, 9 * Cin);
            gwm.noalias() += go * colbuf.transpose();
        }
        if (gb != nullptr)
            for (int c = 0; c < Cout; ++c) gb[c] += go.row(c).sum();
        if (din != nullptr) {
            colgrad.noalias() = weight.transpose() * go;
            col2im_frame(colgrad, Cin, H, W, din + static_cast<int64_t>(f) * Cin * hw);
        }
    }
}

// Depth-3 temporal mixing across frames (zero padded at the ends).
template <typename S>
void tconv_forward(const S* in, int F, int C, int hw, const S* w, const S* b, S* out) {
    for (int f = 0; f < F; ++f) {
        MapRow<S> o(out + static_cast<int64_t>(f) * C * hw, C, hw);
        o.setZero();
        for (int d = -1; d <= 1; ++d) {
            int src = f + d;
            if (src < 0 || src >= F) continue;
            MapRowC<S> wm(w + static_cast<int64_t>(d + 1) * C * C, C, C);
            MapRowC<S> i(in + static_cast<int64_t>(src) * C * hw, C, hw);
            o.noalias() += wm * i;
        }
        for (int c = 0; c < C; ++c) o.row(c).array() += b[c];
    }
}

template <typename S>
void tconv_backward(const S* in, const S* dout, int F, int C, int hw, const S* w, S* din, S* gw,
                    S* gb) {
    for (int f = 0; f < F; ++f) {
        MapRowC<S> go(dout + static_cast<int64_t>(f) * C * hw, C, hw);
        for (int d = -1; d <= 1; ++d) {
            int src = f + d;
            if (src < 0 || src >= F) continue;
            MapRowC<S> wm(w + static_cast<int64_t>(d + 1) * C * C, C, C);
            if (din != nullptr) {
                MapRow<S> gi(din + static_cast<int64_t>(src) * C * hw, C, hw);
                gi.noalias() += wm.transpose() * go;
            }
            if (gw != nullptr) {
                MapRowC<S> i(in + static_cast<int64_t>(src) * C * hw, C, hw);
                MapRow<S> gwm(gw + static_cast<int64_t>(d + 1) * C * C, C, C);
                gwm.noalias() += go * i.transpose();
            }
        }
        if (gb != nullptr)
            for (int c = 0; c < C; ++c) gb[c] += go.row(c).sum();
    }
}

template <typename S>
struct ConvCache {
    std::vector<S> te;                      // concat(time features, label embedding), 2*Et
    std::vector<S> h0_pre;                  // conv_in output, pre-activation
    std::vector<S> h;                       // (B+1) stage outputs
    std::vector<S> a_pre, a_act, t_pre, t_act;  // per block
    std::vector<S> out;
    Mat<S> colbuf, colgrad;
};

template <typename S>
void conv_forward(const ConvLayout& L, std::span<const S> p, std::span<const S> x, int t,
                  int label_row, ConvCache<S>& c) {
    int hw = L.Hh * L.Ww;
    int64_t plane = static_cast<int64_t>(L.F) * L.C * hw;
    c.h0_pre.resize(static_cast<size_t>(plane));
    c.h.resize(static_cast<size_t>(L.B + 1) * plane);
    c.a_pre.resize(static_cast<size_t>(L.B) * plane);
    c.a_act.resize(static_cast<size_t>(L.B) * plane);
    c.t_pre.resize(static_cast<size_t>(L.B) * plane);
    c.t_act.resize(static_cast<size_t>(L.B) * plane);
    c.out.resize(static_cast<size_t>(L.F) * L.C0 * hw);

    if (L.Et > 0) {
        c.te.resize(static_cast<size_t>(2) * L.Et);
        time_features(t, L.Et, c.te.data());
        const S* row = p.data() + L.embed + static_cast<int64_t>(label_row) * L.Et;
        for (int i = 0; i < L.Et; ++i) c.te[L.Et + i] = row[i];
    }

    conv2d_forward(x.data(), L.F, L.Cin, L.Hh, L.Ww, p.data() + L.w_in, p.data() + L.b_in, L.C,
                   c.h0_pre.data(), c.colbuf);
    for (int64_t i = 0; i < plane; ++i) c.h[static_cast<size_t>(i)] = silu(c.h0_pre[i]);

    for (int k = 0; k < L.B; ++k) {
        const S* hk = c.h.data() + static_cast<size_t>(k) * plane;
        S* hn = c.h.data() + static_cast<size_t>(k + 1) * plane;
        S* a_pre = c.a_pre.data() + static_cast<size_t>(k) * plane;
        S* a_act = c.a_act.data() + static_cast<size_t>(k) * plane;
        S* t_pre = c.t_pre.data() + static_cast<size_t>(k) * plane;
        S* t_act = c.t_act.data() + static_cast<size_t>(k) * plane;

        conv2d_forward(hk, L.F, L.C, L.Hh, L.Ww, p.data() + L.w_a[k], p.data() + L.b_a[k], L.C,
                       a_pre, c.colbuf);
        if (L.Et > 0) {
            const S* wp = p.data() + L.w_tp[k];
            const S* bp = p.data() + L.b_tp[k];
            for (int ch = 0; ch < L.C; ++ch) {
                S acc = bp[ch];
                const S* wr = wp + static_cast<int64_t>(ch) * 2 * L.Et;
                for (int j = 0; j < 2 * L.Et; ++j) acc += wr[j] * c.te[j];
                for (int f = 0; f < L.F; ++f) {
                    S* dst = a_pre + (static_cast<int64_t>(f) * L.C + ch) * hw;
                    for (int i = 0; i < hw; ++i) dst[i] += acc;
                }
            }
        }
        for (int64_t i = 0; i < plane; ++i) a_act[i] = silu(a_pre[i]);
        tconv_forward(a_act, L.F, L.C, hw, p.data() + L.w_tc[k], p.data() + L.b_tc[k], t_pre);
        for (int64_t i = 0; i < plane; ++i) t_act[i] = silu(t_pre[i]);

        conv2d_forward(t_act, L.F, L.C, L.Hh, L.Ww, p.data() + L.w_b[k], p.data() + L.b_b[k], L.C,
                       hn, c.colbuf);
        for (int64_t i = 0; i < plane; ++i) hn[i] += hk[i];
    }

    conv2d_forward(c.h.data() + static_cast<size_t>(L.B) * plane, L.F, L.C, L.Hh, L.Ww,
                   p.data() + L.w_out, p.data() + L.b_out, L.C0, c.out.data(), c.colbuf);
}

template <typename S>
void conv_backward(const ConvLayout& L, std::span<const S> p, std::span<const S> x,
                   const ConvCache<S>& cc, int label_row, std::span<const S> dout,
                   std::span<S> grads) {
    ConvCache<S>& c = const_cast<ConvCache<S>&>(cc);
    int hw = L.Hh * L.Ww;
    int64_t plane = static_cast<int64_t>(L.F) * L.C * hw;
    std::vector<S> dh(static_cast<size_t>(plane), S(0));
    std::vector<S> buf_a(static_cast<size_t>(plane)), buf_b(static_cast<size_t>(plane));

    conv2d_backward(c.h.data() + static_cast<size_t>(L.B) * plane, dout.data(), L.F, L.C, L.Hh,
                    L.Ww, p.data() + L.w_out, L.C0, dh.data(), grads.data() + L.w_out,
                    grads.data() + L.b_out, c.colbuf, c.colgrad);

    std::vector<S> dte(static_cast<size_t>(2) * L.Et, S(0));
    for (int k = L.B - 1; k >= 0; --k) {
        const S* hk = c.h.data() + static_cast<size_t>(k) * plane;
        const S* a_pre = c.a_pre.data() + static_cast<size_t>(k) * plane;
        const S* a_act = c.a_act.data() + static_cast<size_t>(k) * plane;
        const S* t_pre = c.t_pre.data() + static_cast<size_t>(k) * plane;
        const S* t_act = c.t_act.data() + static_cast<size_t>(k) * plane;

        // h_{k+1} = h_k + conv_b(t_act)
        std::fill(buf_a.begin(), buf_a.end(), S(0));  // d t_act
        conv2d_backward(t_act, dh.data(), L.F, L.C, L.Hh, L.Ww, p.data() + L.w_b[k], L.C,
                        buf_a.data(), grads.data() + L.w_b[k], grads.data() + L.b_b[k], c.colbuf,
                        c.colgrad);
        for (int64_t i = 0; i < plane; ++i) buf_a[static_cast<size_t>(i)] *= silu_deriv(t_pre[i]);

        std::fill(buf_b.begin(), buf_b.end(), S(0));  // d a_act
        tconv_backward(a_act, buf_a.data(), L.F, L.C, hw, p.data() + L.w_tc[k], buf_b.data(),
                       grads.data() + L.w_tc[k], grads.data() + L.b_tc[k]);
        for (int64_t i = 0; i < plane; ++i) buf_b[static_cast<size_t>(i)] *= silu_deriv(a_pre[i]);

        if (L.Et > 0) {
            const S* wp = p.data() + L.w_tp[k];
            for (int ch = 0; ch < L.C; ++ch) {
                S acc = S(0);
                for (int f = 0; f < L.F; ++f) {
                    const S* src = buf_b.data() + (static_cast<int64_t>(f) * L.C + ch) * hw;
                    for (int i = 0; i < hw; ++i) acc += src[i];
                }
                S* gw = grads.data() + L.w_tp[k] + static_cast<int64_t>(ch) * 2 * L.Et;
                for (int j = 0; j < 2 * L.Et; ++j) {
                    gw[j] += acc * c.te[j];
                    dte[j] += wp[static_cast<int64_t>(ch) * 2 * L.Et + j] * acc;
                }
                grads[L.b_tp[k] + ch] += acc;
            }
        }

        // dh_k = dh_{k+1} (residual) + conv_a^T(d a_pre)
        conv2d_backward(hk, buf_b.data(), L.F, L.C, L.Hh, L.Ww, p.data() + L.w_a[k], L.C,
                        dh.data(), grads.data() + L.w_a[k], grads.data() + L.b_a[k], c.colbuf,
                        c.colgrad);
    }

    for (int64_t i = 0; i < plane; ++i) dh[static_cast<size_t>(i)] *= silu_deriv(c.h0_pre[i]);
    conv2d_backward(x.data(), dh.data(), L.F, L.Cin, L.Hh, L.Ww, p.data() + L.w_in, L.C,
                    static_cast<S*>(nullptr), grads.data() + L.w_in, grads.data() + L.b_in,
                    c.colbuf, c.colgrad);

    if (L.Et > 0) {
        S* ge = grads.data() + L.embed + static_cast<int64_t>(label_row) * L.Et;
        for (int i = 0; i < L.Et; ++i) ge[i] += dte[L.Et + i];
    }
}

}  // namespace

// ---------------------------------------------------------------- descriptor

int ArchitectureDescriptor::input_channels() const {
    return input_shape.channels * (cond_mode == CondMode::kNone ? 1 : 2);
}

void ArchitectureDescriptor::validate() const {
    if (!input_shape.valid()) throw std::invalid_argument("descriptor: invalid input shape");
    if (hidden < 1) throw std::invalid_argument("descriptor: hidden width must be positive");
    if (blocks < 0) throw std::invalid_argument("descriptor: blocks must be >= 0");
    if (vocab_size < 1) throw std::invalid_argument("descriptor: vocabulary size must be >= 1");
    if (time_embed_dim < 0 || time_embed_dim % 2 != 0)
        throw std::invalid_argument("descriptor: time embedding dimension must be even and >= 0");
    if (family == NetFamily::kMlp && cond_mode != CondMode::kNone)
        throw std::invalid_argument("descriptor: flat family supports label conditioning only");
    if (family == NetFamily::kConv && energy_parameterized)
        throw std::invalid_argument("descriptor: energy parameterization requires the flat family");
}

int64_t ArchitectureDescriptor::param_count() const {
    validate();
    return family == NetFamily::kMlp ? MlpLayout::make(*this).total : ConvLayout::make(*this).total;
}

std::vector<ParamSegment> param_segments(const ArchitectureDescriptor& desc) {
    desc.validate();
    std::vector<ParamSegment> segs;
    auto add = [&](const std::string& name, int64_t offset, int64_t size, double scale) {
        if (size > 0) segs.push_back({name, offset, size, scale});
    };
    if (desc.family == NetFamily::kMlp) {
        MlpLayout L = MlpLayout::make(desc);
        if (L.Et > 0) add("label_embed", L.embed, static_cast<int64_t>(L.vocab + 1) * L.Ec, 0.1);
        add("w_in", L.w_in, static_cast<int64_t>(L.H) * L.Z, 1.0 / std::sqrt(L.Z));
        add("b_in", L.b_in, L.H, 0.01);
        for (int k = 0; k < L.B; ++k) {
            add("w_blk" + std::to_string(k), L.w_blk[k], static_cast<int64_t>(L.H) * L.H,
                1.0 / std::sqrt(L.H));
            add("b_blk" + std::to_string(k), L.b_blk[k], L.H, 0.01);
        }
        add("w_out", L.w_out, static_cast<int64_t>(L.out_dim) * L.H, 1.0 / std::sqrt(L.H));
        add("b_out", L.b_out, L.out_dim, 0.01);
    } else {
        ConvLayout L = ConvLayout::make(desc);
        if (L.Et > 0) add("label_embed", L.embed, static_cast<int64_t>(L.vocab + 1) * L.Et, 0.1);
        add("conv_in_w", L.w_in, static_cast<int64_t>(L.C) * L.Cin * 9,
            1.0 / std::sqrt(9.0 * L.Cin));
        add("conv_in_b", L.b_in, L.C, 0.01);
        for (int k = 0; k < L.B; ++k) {
            std::string suffix = std::to_string(k);
            add("conv_a_w" + suffix, L.w_a[k], static_cast<int64_t>(L.C) * L.C * 9,
                1.0 / std::sqrt(9.0 * L.C));
            add("conv_a_b" + suffix, L.b_a[k], L.C, 0.01);
            if (L.Et > 0) {
                add("time_proj_w" + suffix, L.w_tp[k], static_cast<int64_t>(L.C) * 2 * L.Et,
                    1.0 / std::sqrt(2.0 * L.Et));
                add("time_proj_b" + suffix, L.b_tp[k], L.C, 0.01);
            }
            add("tconv_w" + suffix, L.w_tc[k], static_cast<int64_t>(L.C) * L.C * 3,
                1.0 / std::sqrt(3.0 * L.C));
            add("tconv_b" + suffix, L.b_tc[k], L.C, 0.01);
            add("conv_b_w" + suffix, L.w_b[k], static_cast<int64_t>(L.C) * L.C * 9,
                1.0 / std::sqrt(9.0 * L.C));
            add("conv_b_b" + suffix, L.b_b[k], L.C, 0.01);
        }
        add("conv_out_w", L.w_out, static_cast<int64_t>(L.C0) * L.C * 9,
            1.0 / std::sqrt(9.0 * L.C));
        add("conv_out_b", L.b_out, L.C0, 0.01);
    }
    return segs;
}

// ---------------------------------------------------------------- NetEval

template <typename Scalar>
void NetEval<Scalar>::predict(std::span<const Scalar> x, int t, int label_row,
                              std::span<Scalar> out) const {
    if (desc.family == NetFamily::kMlp) {
        MlpLayout L = MlpLayout::make(desc);
        MlpCache<Scalar> c;
        mlp_forward(L, params, x, t, label_row, c);
        if (desc.energy_parameterized) {
            Scalar one = Scalar(1);
            mlp_backward(L, params, c, label_row, std::span<const Scalar>(&one, 1), {}, out);
        } else {
            std::copy(c.out.begin(), c.out.end(), out.begin());
        }
    } else {
        ConvLayout L = ConvLayout::make(desc);
        ConvCache<Scalar> c;
        conv_forward(L, params, x, t, label_row, c);
        std::copy(c.out.begin(), c.out.end(), out.begin());
    }
}

template <typename Scalar>
Scalar NetEval<Scalar>::energy(std::span<const Scalar> x, int t, int label_row) const {
    if (!desc.energy_parameterized)
        throw std::logic_error("NetEval::energy: descriptor is not energy-parameterized");
    MlpLayout L = MlpLayout::make(desc);
    MlpCache<Scalar> c;
    mlp_forward(L, params, x, t, label_row, c);
    return c.out[0];
}

template <typename Scalar>
Scalar NetEval<Scalar>::loss_and_grad(std::span<const Scalar> x, int t, int label_row,
                                      std::span<const Scalar> target,
                                      std::span<Scalar> param_grads) const {
    if (desc.energy_parameterized)
        throw std::invalid_argument(
            "training requires the standard eps parameterization; energy-parameterized "
            "checkpoints are inference-only");
    Scalar sqerr = Scalar(0);
    if (desc.family == NetFamily::kMlp) {
        MlpLayout L = MlpLayout::make(desc);
        MlpCache<Scalar> c;
        mlp_forward(L, params, x, t, label_row, c);
        std::vector<Scalar> dout(c.out.size());
        for (size_t i = 0; i < c.out.size(); ++i) {
            Scalar r = c.out[i] - target[i];
            sqerr += r * r;
            dout[i] = Scalar(2) * r;
        }
        mlp_backward(L, params, c, label_row, std::span<const Scalar>(dout), param_grads, {});
    } else {
        ConvLayout L = ConvLayout::make(desc);
        ConvCache<Scalar> c;
        conv_forward(L, params, x, t, label_row, c);
        std::vector<Scalar> dout(c.out.size());
        for (size_t i = 0; i < c.out.size(); ++i) {
            Scalar r = c.out[i] - target[i];
            sqerr += r * r;
            dout[i] = Scalar(2) * r;
        }
        conv_backward(L, params, x, c, label_row, std::span<const Scalar>(dout), param_grads);
    }
    return sqerr;
}

template struct NetEval<float>;
template struct NetEval<double>;

}  // namespace vad
