#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ussg {

// Machine-readable failure codes shared by every module. The CLI maps these
// to its exit status and prints the code name verbatim.
enum class ErrorCode {
  kSyntax,
  kSchema,
  kVocab,
  kRef,
  kBounds,
  kSelfRelation,
  kDuplicatePair,
  kDuplicateTriplet,
  kDuplicateId,
  kUnknownImage,
  kMissingScores,
  kIdMismatch,
  kDimensionMismatch,
  kUnreachable,
  kMissingMovement,
  kEmptyQuery,
  kTimeout,
  kAuth,
  kTransport,
  kBadResponse,
  kUnscripted,
  kIo,
  kNoSession,
  kBadConfig,
  kPrecondition,
  kParse,
  kUsage,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string path, const std::string& message)
      : std::runtime_error(format(code, path, message)),
        code_(code),
        path_(std::move(path)),
        detail_(message) {}

  Error(ErrorCode code, const std::string& message)
      : Error(code, std::string(), message) {}

  ErrorCode code() const noexcept { return code_; }
  // Field path of the offending element, e.g. "images[0].relations[1]".
  const std::string& path() const noexcept { return path_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  static std::string format(ErrorCode code, const std::string& path,
                            const std::string& message);

  ErrorCode code_;
  std::string path_;
  std::string detail_;
};

}  // namespace ussg
