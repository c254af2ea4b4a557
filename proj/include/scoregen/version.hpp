#ifndef SCOREGEN_VERSION_HPP
#define SCOREGEN_VERSION_HPP

namespace scoregen {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace scoregen

#endif  // SCOREGEN_VERSION_HPP
