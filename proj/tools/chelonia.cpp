// Command-line client.
//
//   chelonia [--config FILE] put orange.jpg /user/me/orange.jpg
//
// The configuration comes from --config, else $CHELONIA_CONFIG, else
// ~/.chelonia.conf.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "chelonia/cli/cli.hpp"
#include "chelonia/core/errors.hpp"
#include "chelonia/hed/real_runtime.hpp"
#include "chelonia/hed/socket_transport.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Chelonia storage client"};
  std::string configPath;
  double timeout = 30.0;
  app.add_option("-c,--config", configPath, "client configuration file");
  app.add_option("--timeout", timeout, "per-call timeout in seconds");
  app.prefix_command();
  CLI11_PARSE(app, argc, argv);

  if (configPath.empty()) {
    if (const char* env = std::getenv(chelonia::cli::kConfigEnv)) {
      configPath = env;
    } else if (const char* home = std::getenv("HOME")) {
      configPath = std::string(home) + "/.chelonia.conf";
    }
  }
  try {
    auto config = chelonia::cli::ClientConfig::load(configPath);
    chelonia::hed::RealRuntime runtime;
    chelonia::hed::SocketTransport transport(timeout);
    chelonia::cli::Client client(transport, runtime, config);
    client.setHandledSchemes({"http"});
    return chelonia::cli::run(app.remaining(), client, std::cout, std::cerr);
  } catch (const chelonia::Error& e) {
    std::cerr << "error " << e.code() << " " << e.message() << "\n";
    return 2;
  }
}
