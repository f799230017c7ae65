#pragma once

namespace jmsac {

// Build identifier stamped into every output artifact.
inline constexpr const char* kBuildId = "jmsac-0.1.0";

} // namespace jmsac
