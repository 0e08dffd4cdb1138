#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emlops::persist {

namespace fs = std::filesystem;

/// Thrown by an armed fault injector in place of a process crash. Callers
/// drop all in-memory state and reopen from disk.
struct SimulatedCrash {
  std::string point;
};

/// Process-wide crash-point injector for persistence tests. Every durable
/// step calls checkpoint(); when armed with N, the N-th checkpoint throws
/// SimulatedCrash.
class FaultInjector {
 public:
  static void arm(int crash_at);
  static void disarm();
  /// Checkpoints passed since the last arm/disarm.
  static int passed();
  static void checkpoint(std::string_view label);
};

/// Disarms on scope exit.
class ScopedFault {
 public:
  explicit ScopedFault(int crash_at) { FaultInjector::arm(crash_at); }
  ~ScopedFault() { FaultInjector::disarm(); }
  ScopedFault(const ScopedFault&) = delete;
  ScopedFault& operator=(const ScopedFault&) = delete;
};

/// Write to a sibling temp file, fsync, then rename over `path`. Readers see
/// either the old or the new content. Throws StorageError.
void atomic_write(const fs::path& path, std::span<const std::uint8_t> data);
void atomic_write(const fs::path& path, std::string_view text);

std::optional<std::vector<std::uint8_t>> read_file(const fs::path& path);
std::optional<std::string> read_text(const fs::path& path);

/// Removes leftover temp files from interrupted atomic writes.
void remove_stale_temps(const fs::path& root);

bool is_temp_file(const fs::path& path);

}  // namespace emlops::persist
