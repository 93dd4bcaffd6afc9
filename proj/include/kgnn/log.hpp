#pragma once

#include <spdlog/spdlog.h>

namespace kgnn {

// Sets the global spdlog level from KGNN_LOG (trace|debug|info|warn|error|off),
// defaulting to info. Output goes to stderr.
void init_logging();

}  // namespace kgnn
