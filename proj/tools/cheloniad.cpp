// Service daemon: runs the services named in a node configuration file
// until SIGINT or SIGTERM.

#include <csignal>
#include <iostream>

#include <unistd.h>

#include <CLI11.hpp>

#include "chelonia/core/errors.hpp"
#include "chelonia/daemon/daemon.hpp"

namespace {

volatile std::sig_atomic_t stopRequested = 0;

void onSignal(int) { stopRequested = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chelonia service daemon"};
  std::string configPath;
  app.add_option("config", configPath, "node configuration file")->required()->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  try {
    chelonia::daemon::Daemon daemon(chelonia::Config::load(configPath));
    daemon.start();
    for (const auto& service : daemon.services()) std::cout << "serving " << daemon.url(service) << std::endl;
    if (daemon.transferPort() != 0) std::cout << "transfers on port " << daemon.transferPort() << std::endl;
    std::signal(SIGINT, onSignal);
    std::signal(SIGTERM, onSignal);
    while (!stopRequested) pause();
    daemon.stop();
  } catch (const chelonia::Error& e) {
    std::cerr << "cheloniad: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
