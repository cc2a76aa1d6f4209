#include "cugro/netio.hpp"

namespace cugro {

namespace {

std::string act_name(Activation a) {
    return a == Activation::kSilu ? "silu" : "none";
}

Activation act_from_name(const std::string& s) {
    if (s == "silu") return Activation::kSilu;
    if (s == "none") return Activation::kNone;
    throw FormatError("unknown activation tag '" + s + "'");
}

}  // namespace

void write_net(Manifest& m, BlobWriter& blob, const std::string& prefix, const DenseNet& net) {
    m.set_u64(prefix + ".input_dim", net.input_dim);
    m.set_u64(prefix + ".layers", net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const DenseLayer& l = net.layers[i];
        const std::string key = prefix + ".layer" + std::to_string(i);
        m.set_u64(key + ".out", l.out_dim());
        m.set_u64(key + ".in", l.in_dim());
        m.set(key + ".act", act_name(l.act));
        m.set_i64(key + ".skip", l.skip_from);
    }
    for (const DenseLayer& l : net.layers) {
        blob.put(l.w);
        blob.put(l.b);
    }
}

DenseNet read_net(const Manifest& m, BlobReader& blob, const std::string& prefix) {
    DenseNet net;
    net.input_dim = m.get_u64(prefix + ".input_dim");
    const std::size_t n = m.get_u64(prefix + ".layers");
    for (std::size_t i = 0; i < n; ++i) {
        const std::string key = prefix + ".layer" + std::to_string(i);
        DenseLayer l;
        const std::size_t out = m.get_u64(key + ".out");
        const std::size_t in = m.get_u64(key + ".in");
        l.w = Tensor({out, in});
        l.b = Tensor({out});
        l.act = act_from_name(m.get(key + ".act"));
        l.skip_from = static_cast<int>(m.get_i64(key + ".skip"));
        net.layers.push_back(std::move(l));
    }
    for (DenseLayer& l : net.layers) {
        blob.next(l.w);
        blob.next(l.b);
    }
    net.validate();
    return net;
}

}  // namespace cugro
