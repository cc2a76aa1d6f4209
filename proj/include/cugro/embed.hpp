#pragma once

#include <span>

#include "cugro/rng.hpp"
#include "cugro/tensor.hpp"

namespace cugro {

/// Sinusoidal features for a diffusion time t in [0, 1]: dim/2 sine values
/// followed by dim/2 cosines, with geometric frequencies spanning [1, 1e4].
Tensor time_embedding(double t, std::size_t dim);

/// Writes time_embedding(t, out.size()) into a preallocated span.
void time_embedding_into(double t, std::span<double> out);

/// Learned per-task embedding rows. Rows are only ever appended; existing
/// rows keep their values when the table grows.
struct EmbeddingTable {
    Tensor table;  // [rows, dim]

    EmbeddingTable() = default;
    EmbeddingTable(std::size_t rows, std::size_t dim, Rng& rng);

    std::size_t rows() const { return table.rank() == 2 ? table.dim(0) : 0; }
    std::size_t dim() const { return table.rank() == 2 ? table.dim(1) : 0; }

    std::span<const double> row(std::size_t r) const { return table.row(r); }

    /// Appends freshly initialized rows until the table has `rows` of them.
    void grow_to(std::size_t rows, Rng& rng);
};

}  // namespace cugro
