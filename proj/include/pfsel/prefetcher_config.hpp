#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace pfsel {

// Enable mask for the four prefetcher components. Bit i = component i on.
// Rendered as a 4-char binary string, most significant bit first: "0101"
// means components 0 and 2 enabled.
struct PrefetcherConfig {
  std::uint8_t mask = 0;

  friend constexpr auto operator<=>(PrefetcherConfig, PrefetcherConfig) = default;

  constexpr bool enabled(int component) const { return (mask >> component) & 1; }

  static constexpr int kComponents = 4;

  static constexpr PrefetcherConfig off() { return {0b0000}; }
  static constexpr PrefetcherConfig all_on() { return {0b1111}; }
  // The platform ships with a single component enabled.
  static constexpr PrefetcherConfig platform_default() { return {0b0001}; }

  std::string to_string() const {
    std::string s(4, '0');
    for (int i = 0; i < 4; ++i)
      if ((mask >> (3 - i)) & 1) s[i] = '1';
    return s;
  }

  static std::optional<PrefetcherConfig> parse(std::string_view s) {
    if (s.size() != 4) return std::nullopt;
    std::uint8_t m = 0;
    for (char c : s) {
      if (c != '0' && c != '1') return std::nullopt;
      m = static_cast<std::uint8_t>((m << 1) | (c == '1'));
    }
    return PrefetcherConfig{m};
  }

  bool is_valid() const { return valid_index(*this) >= 0; }

  // Platform table: component 1 is slaved to component 0's pattern detector,
  // so masks with bit 1 set and bit 0 clear are rejected. 12 of 16 remain.
  static std::span<const PrefetcherConfig> valid_set() {
    static constexpr std::array<PrefetcherConfig, 12> table = [] {
      std::array<PrefetcherConfig, 12> t{};
      int n = 0;
      for (std::uint8_t m = 0; m < 16; ++m)
        if (!((m & 0b0010) && !(m & 0b0001))) t[n++] = PrefetcherConfig{m};
      return t;
    }();
    return table;
  }

  static constexpr int kValidCount = 12;

  // Index of a mask within valid_set(), or -1.
  static int valid_index(PrefetcherConfig c) {
    auto set = valid_set();
    for (int i = 0; i < static_cast<int>(set.size()); ++i)
      if (set[i] == c) return i;
    return -1;
  }
};

}  // namespace pfsel
