#pragma once

// HTTP facade for the studio: volumes, rendering, fiducial review sessions and
// asynchronous reconstruction jobs. Every computation goes through the same
// library calls as the CLI.

#include <frk/pipeline.hpp>

#include <filesystem>
#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace frk {

struct ServiceOptions {
  std::filesystem::path data_dir;  ///< content-addressed artifact store; memory only when empty
  int workers = 2;                 ///< reconstruction job threads
  bool demo = false;               ///< preload the lumbar phantom CT and label volumes
};

/// FRK_DATA_DIR when set, else ./frk-data.
std::filesystem::path default_data_dir();

class Service {
 public:
  explicit Service(ServiceOptions opts = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Registers every /api route on `server`.
  void mount(httplib::Server& server);

  /// Adds an in-memory volume to the shared store and returns its id.
  std::string add_volume(const AnyVolume& v, const std::string& name);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocks serving on host:port until the process is stopped.
void serve(const ServiceOptions& opts, const std::string& host, int port);

}  // namespace frk
