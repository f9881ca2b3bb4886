#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

namespace tractloop {

struct ServiceOptions {
  std::filesystem::path data_dir;
  std::size_t preview_limit = 500;
};

/// HTTP/JSON adapter over interactive sessions:
///
///   GET  /healthz
///   GET  /datasets
///   POST /sessions                      {dataset, roi: {center, radius}, config}
///   GET  /sessions/{id}
///   POST /sessions/{id}/labels          {labels: [{id, positive}]}
///   POST /sessions/{id}/resample        {roi?}
///   POST /sessions/{id}/accept
///   GET  /sessions/{id}/export/{tract.tck|mask.bin|journal.txt}
///
/// Sessions live in memory; accepted sessions also write their journal to
/// <data_dir>/journals/<id>.journal.
class SessionService {
 public:
  explicit SessionService(ServiceOptions options);
  ~SessionService();

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the bound
  /// port or throws IoError if the address is unavailable.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called. Requires a successful bind().
  void listen();
  void stop();
  bool running() const;
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tractloop
