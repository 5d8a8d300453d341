#pragma once

#ifndef LEVYINT_VERSION
#define LEVYINT_VERSION "0.1.0"
#endif

namespace levyint {

inline constexpr const char* version() { return LEVYINT_VERSION; }

}  // namespace levyint
