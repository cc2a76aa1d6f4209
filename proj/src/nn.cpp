#include "cugro/nn.hpp"

#include <cmath>
#include <string>

namespace cugro {

double silu(double x) {
    return x / (1.0 + std::exp(-x));
}

Tensor silu(const Tensor& x) {
    check_finite(x, "silu input");
    Tensor y = x;
    for (double& v : y.data) v = silu(v);
    return y;
}

namespace {

double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

std::size_t skip_width(const DenseNet& net, int skip_from) {
    if (skip_from == DenseLayer::kNoSkip) return 0;
    if (skip_from == DenseLayer::kSkipInput) return net.input_dim;
    return net.layers[static_cast<std::size_t>(skip_from)].out_dim();
}

// y[B,out] += x[B,in] . w[out,in]^T + b
void affine_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
    const std::size_t batch = x.rows(), in = w.dim(1), out = w.dim(0);
    for (std::size_t r = 0; r < batch; ++r) {
        const double* xr = x.data.data() + r * in;
        double* yr = y.data.data() + r * out;
        for (std::size_t j = 0; j < out; ++j) {
            const double* wj = w.data.data() + j * in;
            double acc = b(j);
            for (std::size_t i = 0; i < in; ++i) acc += wj[i] * xr[i];
            yr[j] = acc;
        }
    }
}

DenseLayer init_layer(Rng& rng, std::size_t in, std::size_t out, Activation act,
                      int skip_from = DenseLayer::kNoSkip) {
    DenseLayer layer;
    layer.w = Tensor({out, in});
    layer.b = Tensor({out});
    layer.act = act;
    layer.skip_from = skip_from;
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    for (double& v : layer.w.data) v = rng.uniform(-bound, bound);
    return layer;
}

}  // namespace

void DenseNet::validate() const {
    if (layers.empty()) throw ShapeError("dense net has no layers");
    std::size_t carried = input_dim;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const DenseLayer& l = layers[i];
        if (l.skip_from >= static_cast<int>(i)) {
            throw ShapeError("layer " + std::to_string(i) + " skips from a later layer");
        }
        const std::size_t expect = carried + skip_width(*this, l.skip_from);
        if (l.in_dim() != expect) {
            throw ShapeError("layer " + std::to_string(i) + " expects input width " +
                             std::to_string(l.in_dim()) + ", got " + std::to_string(expect));
        }
        if (l.b.size() != l.out_dim()) {
            throw ShapeError("layer " + std::to_string(i) + " bias width mismatch");
        }
        carried = l.out_dim();
    }
}

std::vector<Tensor*> DenseNet::params() {
    std::vector<Tensor*> out;
    for (DenseLayer& l : layers) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    }
    return out;
}

std::vector<const Tensor*> DenseNet::params() const {
    std::vector<const Tensor*> out;
    for (const DenseLayer& l : layers) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    }
    return out;
}

std::size_t DenseNet::param_count() const {
    std::size_t n = 0;
    for (const DenseLayer& l : layers) n += l.w.size() + l.b.size();
    return n;
}

void NetGrads::init(const DenseNet& net, std::size_t batch) {
    dw.clear();
    db.clear();
    for (const DenseLayer& l : net.layers) {
        dw.push_back(Tensor({l.out_dim(), l.in_dim()}));
        db.push_back(Tensor({l.out_dim()}));
    }
    dinput = Tensor({batch, net.input_dim});
}

void NetGrads::zero() {
    for (Tensor& t : dw) t.fill(0.0);
    for (Tensor& t : db) t.fill(0.0);
    dinput.fill(0.0);
}

std::vector<const Tensor*> NetGrads::param_grads() const {
    std::vector<const Tensor*> out;
    for (std::size_t i = 0; i < dw.size(); ++i) {
        out.push_back(&dw[i]);
        out.push_back(&db[i]);
    }
    return out;
}

Tensor forward(const DenseNet& net, const Tensor& x, Tape* tape) {
    if (x.cols() != net.input_dim) {
        throw ShapeError("forward: input width " + std::to_string(x.cols()) + " != net input " +
                         std::to_string(net.input_dim));
    }
    const std::size_t batch = x.rows();
    Tensor input = x;
    if (input.rank() == 1) input.shape = {1, net.input_dim};

    std::vector<Tensor> outs;
    outs.reserve(net.layers.size());
    if (tape) {
        tape->input = input;
        tape->layer_in.clear();
        tape->preact.clear();
        tape->out.clear();
    }

    const Tensor* carried = &input;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const DenseLayer& l = net.layers[i];

        Tensor cat;
        const Tensor* lin = carried;
        if (l.skip_from != DenseLayer::kNoSkip) {
            const Tensor& skip =
                l.skip_from == DenseLayer::kSkipInput ? input : outs[static_cast<std::size_t>(l.skip_from)];
            cat = Tensor({batch, carried->cols() + skip.cols()});
            for (std::size_t r = 0; r < batch; ++r) {
                auto dst = cat.row(r);
                auto a = carried->row(r);
                auto s = skip.row(r);
                std::copy(a.begin(), a.end(), dst.begin());
                std::copy(s.begin(), s.end(), dst.begin() + static_cast<std::ptrdiff_t>(a.size()));
            }
            lin = &cat;
        }
        if (lin->cols() != l.in_dim()) {
            throw ShapeError("forward: layer " + std::to_string(i) + " width mismatch");
        }

        Tensor z({batch, l.out_dim()});
        affine_forward(*lin, l.w, l.b, z);
        Tensor y = z;
        if (l.act == Activation::kSilu) {
            for (double& v : y.data) v = silu(v);
        }
        if (tape) {
            tape->layer_in.push_back(lin == carried ? *carried : std::move(cat));
            tape->preact.push_back(std::move(z));
        }
        outs.push_back(std::move(y));
        carried = &outs.back();
    }

    check_finite(outs.back(), "forward output");
    Tensor result = outs.back();
    if (tape) tape->out = std::move(outs);
    return result;
}

void backward(const DenseNet& net, const Tape& tape, const Tensor& dout, NetGrads& grads) {
    const std::size_t nl = net.layers.size();
    if (tape.preact.size() != nl) throw ShapeError("backward: tape does not match net");
    const std::size_t batch = tape.input.rows();
    if (dout.rows() != batch || dout.cols() != net.output_dim()) {
        throw ShapeError("backward: output grad shape mismatch");
    }
    if (grads.dw.size() != nl) grads.init(net, batch);
    if (grads.dinput.rows() != batch) {
        grads.dinput = Tensor({batch, net.input_dim});
    }

    // Accumulated gradient w.r.t. each layer's post-activation output.
    std::vector<Tensor> dout_acc(nl);
    for (std::size_t i = 0; i < nl; ++i) dout_acc[i] = Tensor({batch, net.layers[i].out_dim()});
    dout_acc[nl - 1] = dout;

    for (std::size_t li = nl; li-- > 0;) {
        const DenseLayer& l = net.layers[li];
        const Tensor& z = tape.preact[li];
        const Tensor& lin = tape.layer_in[li];
        const std::size_t in = l.in_dim(), out = l.out_dim();

        // dz = dout ⊙ act'(z)
        Tensor dz = dout_acc[li];
        if (l.act == Activation::kSilu) {
            for (std::size_t i = 0; i < dz.size(); ++i) dz.data[i] *= silu_grad(z.data[i]);
        }

        Tensor& dw = grads.dw[li];
        Tensor& db = grads.db[li];
        Tensor dlin({batch, in});
        for (std::size_t r = 0; r < batch; ++r) {
            const double* zr = dz.data.data() + r * out;
            const double* xr = lin.data.data() + r * in;
            double* dxr = dlin.data.data() + r * in;
            for (std::size_t j = 0; j < out; ++j) {
                const double g = zr[j];
                if (g == 0.0) continue;
                double* dwj = dw.data.data() + j * in;
                const double* wj = l.w.data.data() + j * in;
                for (std::size_t i = 0; i < in; ++i) {
                    dwj[i] += g * xr[i];
                    dxr[i] += g * wj[i];
                }
                db(j) += g;
            }
        }

        // Route the concatenated-input gradient back to its sources.
        const std::size_t base = li == 0 ? net.input_dim : net.layers[li - 1].out_dim();
        Tensor* base_dst = li == 0 ? &grads.dinput : &dout_acc[li - 1];
        for (std::size_t r = 0; r < batch; ++r) {
            const double* src = dlin.data.data() + r * in;
            double* bd = base_dst->data.data() + r * base;
            for (std::size_t i = 0; i < base; ++i) bd[i] += src[i];
        }
        if (l.skip_from != DenseLayer::kNoSkip) {
            Tensor* skip_dst = l.skip_from == DenseLayer::kSkipInput
                                   ? &grads.dinput
                                   : &dout_acc[static_cast<std::size_t>(l.skip_from)];
            const std::size_t sw = in - base;
            const std::size_t scols = skip_dst->cols();
            for (std::size_t r = 0; r < batch; ++r) {
                const double* src = dlin.data.data() + r * in + base;
                double* sd = skip_dst->data.data() + r * scols;
                for (std::size_t i = 0; i < sw; ++i) sd[i] += src[i];
            }
        }
    }
}

DenseNet make_mlp(Rng& rng, std::size_t in, const std::vector<std::size_t>& hidden,
                  std::size_t out, Activation hidden_act) {
    DenseNet net;
    net.input_dim = in;
    std::size_t prev = in;
    for (std::size_t h : hidden) {
        net.layers.push_back(init_layer(rng, prev, h, hidden_act));
        prev = h;
    }
    net.layers.push_back(init_layer(rng, prev, out, Activation::kNone));
    net.validate();
    return net;
}

DenseNet make_skip_net(Rng& rng, std::size_t in, std::size_t width, std::size_t depth,
                       std::size_t out) {
    if (depth < 1) throw ShapeError("skip net needs depth >= 1");
    DenseNet net;
    net.input_dim = in;
    std::size_t prev = in;
    for (std::size_t d = 0; d < depth; ++d) {
        net.layers.push_back(init_layer(rng, prev, width, Activation::kSilu));
        prev = width;
    }
    // Decoder layers mirror the encoder, each consuming the matching-depth
    // encoder activation alongside the carried value.
    for (std::size_t d = 0; d + 1 < depth; ++d) {
        const int skip = static_cast<int>(depth - 2 - d);
        net.layers.push_back(init_layer(rng, width + width, width, Activation::kSilu, skip));
    }
    net.layers.push_back(init_layer(rng, width, out, Activation::kNone));
    net.validate();
    return net;
}

}  // namespace cugro
