#pragma once

#include <cstdint>
#include <string>

namespace sednoise {

enum class Origin : std::uint8_t { Clean = 0, Noisy = 1 };
enum class Split : std::uint8_t { Train = 0, Test = 1 };

inline const char* to_string(Origin o) { return o == Origin::Clean ? "clean" : "noisy"; }
inline const char* to_string(Split s) { return s == Split::Train ? "train" : "test"; }

}  // namespace sednoise
