#pragma once

#include "ggsa/tape.hpp"

namespace ggsa::ad {

// Defined in ops.cpp next to the forward kernels.
void backward_entry(const Tape::Entry& entry);

} // namespace ggsa::ad
