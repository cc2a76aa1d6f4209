#include "cugro/embed.hpp"

#include <cmath>

#include "cugro/error.hpp"

namespace cugro {

void time_embedding_into(double t, std::span<double> out) {
    const std::size_t dim = out.size();
    if (dim < 2 || dim % 2 != 0) {
        throw ShapeError("time embedding dim must be even and >= 2");
    }
    if (!(t >= 0.0 && t <= 1.0)) {
        throw NumericError("time embedding t outside [0, 1]");
    }
    const std::size_t half = dim / 2;
    for (std::size_t j = 0; j < half; ++j) {
        const double frac = half == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(half - 1);
        const double omega = std::pow(10.0, 4.0 * frac);
        out[j] = std::sin(omega * t);
        out[half + j] = std::cos(omega * t);
    }
}

Tensor time_embedding(double t, std::size_t dim) {
    Tensor e({dim});
    time_embedding_into(t, {e.data.data(), dim});
    return e;
}

EmbeddingTable::EmbeddingTable(std::size_t rows, std::size_t dim, Rng& rng) {
    table = Tensor({0, dim});
    grow_to(rows, rng);
}

void EmbeddingTable::grow_to(std::size_t target_rows, Rng& rng) {
    const std::size_t d = dim();
    if (d == 0) throw ShapeError("embedding table has no column dimension");
    while (rows() < target_rows) {
        for (std::size_t j = 0; j < d; ++j) {
            table.data.push_back(0.1 * rng.normal());
        }
        table.shape[0] += 1;
    }
}

}  // namespace cugro
