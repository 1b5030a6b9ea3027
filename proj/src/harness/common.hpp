#pragma once

// Helpers shared by the scenario runners.

#include <string>

#include "chelonia/core/wire.hpp"
#include "chelonia/harness/deployment.hpp"

namespace chelonia::harness::detail {

// A call to bartender 0 as the harness user.
Value bartender(Deployment& d, const std::string& op, const Value& args);

// putFile followed by the upload; returns the GUID.
std::string putFile(Deployment& d, const std::string& ln, const Bytes& data, int needed);
Bytes getFile(Deployment& d, const std::string& ln);

// First value of a [params] key, or the fallback.
double param(const Config& c, const char* key, double fallback);
std::string param(const Config& c, const char* key, const std::string& fallback);

}  // namespace chelonia::harness::detail
