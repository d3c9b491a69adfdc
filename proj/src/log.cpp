#include <spdlog/spdlog.h>

#include "percap/core.hpp"

namespace percap {

void warn(const std::string& message) { spdlog::warn("{}", message); }

}  // namespace percap
