#pragma once

#include <cstdint>

namespace fllab {

/// Class id. Sixteen bits to match the dataset file format.
using Label = std::uint16_t;

}  // namespace fllab
