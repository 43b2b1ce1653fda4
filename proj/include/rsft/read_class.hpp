#ifndef RSFT_READ_CLASS_HPP_
#define RSFT_READ_CLASS_HPP_

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rsft {

// Input is malformed or inconsistent (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite value (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ReadClass : int {
  kChimeric = 0,
  kLeftRepeat = 1,
  kRightRepeat = 2,
  kRegular = 3,
};

inline constexpr int kNumClasses = 4;

inline constexpr std::array<ReadClass, kNumClasses> kAllClasses = {
    ReadClass::kChimeric, ReadClass::kLeftRepeat, ReadClass::kRightRepeat,
    ReadClass::kRegular};

inline constexpr int to_index(ReadClass c) { return static_cast<int>(c); }

inline ReadClass class_from_index(int i) {
  if (i < 0 || i >= kNumClasses) {
    throw std::out_of_range("[rsft::class_from_index] error: invalid class index " +
                            std::to_string(i));
  }
  return static_cast<ReadClass>(i);
}

inline std::string to_string(ReadClass c) {
  switch (c) {
    case ReadClass::kChimeric: return "chimeric";
    case ReadClass::kLeftRepeat: return "left_repeat";
    case ReadClass::kRightRepeat: return "right_repeat";
    case ReadClass::kRegular: return "regular";
  }
  return "regular";
}

inline std::optional<ReadClass> parse_read_class(std::string_view s) {
  for (auto c : kAllClasses) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

// Reversing a signal swaps the repeat side.
inline ReadClass mirrored(ReadClass c) {
  switch (c) {
    case ReadClass::kLeftRepeat: return ReadClass::kRightRepeat;
    case ReadClass::kRightRepeat: return ReadClass::kLeftRepeat;
    default: return c;
  }
}

}  // namespace rsft

#endif  // RSFT_READ_CLASS_HPP_
