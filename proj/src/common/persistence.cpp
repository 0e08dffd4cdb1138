#include "emlops/persistence.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>

#include "emlops/errors.hpp"

namespace emlops::persist {

namespace {

constexpr std::string_view kTempMarker = ".tmp-";

std::atomic<int> g_crash_at{0};
std::atomic<int> g_passed{0};
std::atomic<std::uint64_t> g_temp_counter{0};

[[noreturn]] void fail(const std::string& what, const fs::path& path) {
  throw StorageError(what + " '" + path.string() + "': " + std::strerror(errno));
}

void fsync_dir(const fs::path& dir) {
  const int fd = ::open(dir.empty() ? "." : dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

void FaultInjector::arm(int crash_at) {
  g_passed = 0;
  g_crash_at = crash_at;
}

void FaultInjector::disarm() {
  g_crash_at = 0;
  g_passed = 0;
}

int FaultInjector::passed() { return g_passed; }

void FaultInjector::checkpoint(std::string_view label) {
  const int n = ++g_passed;
  if (g_crash_at > 0 && n == g_crash_at) throw SimulatedCrash{std::string(label)};
}

void atomic_write(const fs::path& path, std::span<const std::uint8_t> data) {
  std::error_code ec;
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw StorageError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());

  const fs::path tmp = path.string() + std::string(kTempMarker) + std::to_string(::getpid()) + "-" +
                       std::to_string(g_temp_counter.fetch_add(1));
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) fail("cannot create", tmp);
  std::size_t written = 0;
  while (written < data.size()) {
    const ssize_t n = ::write(fd, data.data() + written, data.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int saved = errno;
      ::close(fd);
      ::unlink(tmp.c_str());
      errno = saved;
      fail("cannot write", tmp);
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    ::unlink(tmp.c_str());
    fail("cannot flush", tmp);
  }
  FaultInjector::checkpoint("before-rename:" + path.filename().string());
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    ::unlink(tmp.c_str());
    fail("cannot rename into", path);
  }
  fsync_dir(path.parent_path());
  FaultInjector::checkpoint("after-rename:" + path.filename().string());
}

void atomic_write(const fs::path& path, std::string_view text) {
  atomic_write(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::optional<std::vector<std::uint8_t>> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::optional<std::string> read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool is_temp_file(const fs::path& path) {
  return path.filename().string().find(kTempMarker) != std::string::npos;
}

void remove_stale_temps(const fs::path& root) {
  std::error_code ec;
  if (!fs::exists(root, ec)) return;
  std::vector<fs::path> doomed;
  for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (it->is_regular_file(ec) && is_temp_file(it->path())) doomed.push_back(it->path());
  }
  for (const auto& p : doomed) fs::remove(p, ec);
}

}  // namespace emlops::persist
