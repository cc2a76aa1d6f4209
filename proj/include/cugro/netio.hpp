#pragma once

#include <string>

#include "cugro/blobio.hpp"
#include "cugro/nn.hpp"

namespace cugro {

/// Serializes net structure under `<prefix>.*` manifest keys and appends
/// all parameters (w then b per layer, in layer order) to the blob.
void write_net(Manifest& m, BlobWriter& blob, const std::string& prefix, const DenseNet& net);

/// Rebuilds a net from manifest keys and consumes its parameters from the
/// blob. Round-trip is bit-exact.
DenseNet read_net(const Manifest& m, BlobReader& blob, const std::string& prefix);

}  // namespace cugro
