#pragma once

#include <string>

#include "spikedet/network.hpp"

namespace spikedet {

// Self-describing network container: 8-byte magic "SPKDNET\0", uint32
// format version, uint32 JSON header length, the JSON layer list, then a
// single little-endian float32 blob section referenced by (offset, count)
// entries in the header. See docs in README for the header schema.
void save_network(const NetworkGraph& net, const std::string& path);
NetworkGraph load_network(const std::string& path);

} // namespace spikedet
