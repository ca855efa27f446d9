#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace facetcoh {

enum class Errc {
  InvalidArgument,
  Io,
  Parse,
  MissingHeader,
  EmptyFacet,
  EmptySet,
  EmptyToken,
  ProviderFailure,
  UnpairedQuery,
  SingleClassTraining,
  NonFiniteLoss,
  SchemaMismatch,
  EmptyTestSet,
  EmptyClass,
  ZeroN,
  EmptyInput,
  UnknownGoldSet,
  AlreadyQualified,
  NotQualified,
  DuplicateJudgment,
  UnknownTask,
  TaskComplete,
  UnknownSubcommand,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace facetcoh
