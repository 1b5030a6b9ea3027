#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace chelonia {

// Stable error codes. They travel over the wire as plain strings and are
// printed verbatim by the command-line client.
namespace errc {
inline constexpr std::string_view kDuplicateName = "duplicate-name";
inline constexpr std::string_view kUnknownTarget = "unknown-target";
inline constexpr std::string_view kQueueFull = "queue-full";
inline constexpr std::string_view kTransportFailure = "transport-failure";
inline constexpr std::string_view kUntrusted = "untrusted";
inline constexpr std::string_view kNotSimulation = "not-simulation-transport";
inline constexpr std::string_view kUnknownOperation = "unknown-operation";
inline constexpr std::string_view kBadRequest = "bad-request";

inline constexpr std::string_view kNodeDown = "node-down";
inline constexpr std::string_view kNotMaster = "not-master";
inline constexpr std::string_view kNoMaster = "no-master";
inline constexpr std::string_view kGapDetected = "gap-detected";
inline constexpr std::string_view kNotFromMaster = "not-from-master";
inline constexpr std::string_view kNoMajority = "no-majority";

inline constexpr std::string_view kAHashUnavailable = "ahash-unavailable";
inline constexpr std::string_view kLibrarianUnavailable = "librarian-unavailable";
inline constexpr std::string_view kBartenderUnavailable = "bartender-unavailable";

inline constexpr std::string_view kInsufficientSpace = "insufficient-space";
inline constexpr std::string_view kBackendFailure = "backend-failure";
inline constexpr std::string_view kNoAliveReplica = "no-alive-replica";
inline constexpr std::string_view kAlreadyHolder = "already-holder";
inline constexpr std::string_view kTicketInvalid = "ticket-invalid";
inline constexpr std::string_view kChecksumMismatch = "checksum-mismatch";

inline constexpr std::string_view kNotFound = "not-found";
inline constexpr std::string_view kParentMissing = "parent-missing";
inline constexpr std::string_view kNameTaken = "name-taken";
inline constexpr std::string_view kAccessDenied = "access-denied";
inline constexpr std::string_view kNotEmpty = "not-empty";
inline constexpr std::string_view kNotACollection = "not-a-collection";
inline constexpr std::string_view kNotAFile = "not-a-file";
inline constexpr std::string_view kIsCollection = "is-collection";
inline constexpr std::string_view kNoShepherdAvailable = "no-shepherd-available";
inline constexpr std::string_view kNoEligibleShepherd = "no-eligible-shepherd";
inline constexpr std::string_view kNotUnderReplicated = "not-under-replicated";
inline constexpr std::string_view kInvalidName = "invalid-name";
inline constexpr std::string_view kConditionFailed = "condition-failed";
}  // namespace errc

/// Error raised by every service operation. `code` is one of the stable
/// strings in `errc`; `detail` carries structured data for codes that need
/// it (a master hint, a replica's last sequence number).
class Error : public std::runtime_error {
 public:
  Error(std::string_view code, std::string message = {}, nlohmann::json detail = nullptr)
      : std::runtime_error(message.empty() ? std::string(code) : std::string(code) + ": " + message),
        code_(code),
        message_(std::move(message)),
        detail_(std::move(detail)) {}

  const std::string& code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }
  const nlohmann::json& detail() const noexcept { return detail_; }

  bool is(std::string_view code) const noexcept { return code_ == code; }

 private:
  std::string code_;
  std::string message_;
  nlohmann::json detail_;
};

}  // namespace chelonia
