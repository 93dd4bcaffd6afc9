#include "kgnn/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace kgnn {

void init_logging() {
  static const bool once = [] {
    auto logger = spdlog::stderr_color_mt("kgnn");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("KGNN_LOG")) spdlog::set_level(spdlog::level::from_str(env));
    return true;
  }();
  (void)once;
}

}  // namespace kgnn
