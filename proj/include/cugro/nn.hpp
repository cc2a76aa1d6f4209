#pragma once

#include <vector>

#include "cugro/rng.hpp"
#include "cugro/tensor.hpp"

namespace cugro {

enum class Activation { kNone, kSilu };

double silu(double x);

/// Elementwise x * sigmoid(x). Rejects non-finite input.
Tensor silu(const Tensor& x);

/// One dense layer. `skip_from` optionally concatenates an earlier
/// activation to this layer's input: kSkipInput concatenates the network
/// input, an index >= 0 concatenates that layer's output. This is how the
/// encoder-decoder nets wire their skip paths; plain MLPs leave it at
/// kNoSkip.
struct DenseLayer {
    static constexpr int kNoSkip = -2;
    static constexpr int kSkipInput = -1;

    Tensor w;  // [out, in]
    Tensor b;  // [out]
    Activation act = Activation::kNone;
    int skip_from = kNoSkip;

    std::size_t in_dim() const { return w.dim(1); }
    std::size_t out_dim() const { return w.dim(0); }
};

struct DenseNet {
    std::size_t input_dim = 0;
    std::vector<DenseLayer> layers;

    std::size_t output_dim() const { return layers.back().out_dim(); }

    /// Checks the dimension chain, including skip widths. Throws ShapeError.
    void validate() const;

    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
    std::size_t param_count() const;
};

/// Activation record from forward(); holds everything backward() needs.
struct Tape {
    Tensor input;                  // [B, in]
    std::vector<Tensor> layer_in;  // post-concat input per layer
    std::vector<Tensor> preact;    // pre-activation per layer
    std::vector<Tensor> out;       // post-activation per layer
};

/// Parameter gradients plus the gradient w.r.t. the network input (the
/// input slice feeding a learned embedding needs it).
struct NetGrads {
    std::vector<Tensor> dw;
    std::vector<Tensor> db;
    Tensor dinput;  // [B, in]

    void init(const DenseNet& net, std::size_t batch);
    void zero();
    std::vector<const Tensor*> param_grads() const;
};

/// Batched forward pass; x is [B, input_dim] (or [input_dim] treated as one
/// row). When `tape` is non-null it is filled for a later backward().
Tensor forward(const DenseNet& net, const Tensor& x, Tape* tape = nullptr);

/// Reverse-mode pass. `dout` is dLoss/dOutput, [B, output_dim]. Gradients
/// accumulate into `grads` (callers zero or scale as needed).
void backward(const DenseNet& net, const Tape& tape, const Tensor& dout, NetGrads& grads);

/// Plain MLP: hidden layers with `hidden_act`, linear output.
DenseNet make_mlp(Rng& rng, std::size_t in, const std::vector<std::size_t>& hidden,
                  std::size_t out, Activation hidden_act = Activation::kSilu);

/// Encoder-decoder net with concatenation skips: `depth` encoder layers of
/// width `width`, decoder layers receiving the matching-depth encoder
/// activation concatenated to their input, then a linear head.
DenseNet make_skip_net(Rng& rng, std::size_t in, std::size_t width, std::size_t depth,
                       std::size_t out);

}  // namespace cugro
