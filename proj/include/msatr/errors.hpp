#pragma once

#include <stdexcept>
#include <string>

namespace msatr {

enum class ErrorKind {
  Dimension,
  Domain,
  Contract,
  Config,
  Partition,
  Checkpoint,
  Dataset,
  Divergence,
  Io,
};

const char* error_kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define MSATR_DEFINE_ERROR(Name, Kind)                                           \
  class Name : public Error {                                                    \
   public:                                                                       \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}     \
  };

MSATR_DEFINE_ERROR(DimensionError, Dimension)
MSATR_DEFINE_ERROR(DomainError, Domain)
MSATR_DEFINE_ERROR(ContractError, Contract)
MSATR_DEFINE_ERROR(ConfigError, Config)
MSATR_DEFINE_ERROR(PartitionError, Partition)
MSATR_DEFINE_ERROR(DatasetError, Dataset)
MSATR_DEFINE_ERROR(IoError, Io)

#undef MSATR_DEFINE_ERROR

// Reading a checkpoint failed at a known byte offset.
class CheckpointError : public Error {
 public:
  CheckpointError(const std::string& what, std::size_t offset)
      : Error(ErrorKind::Checkpoint, what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// A loss term went non-finite during training.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& term, long long step)
      : Error(ErrorKind::Divergence,
              "training diverged: loss term '" + term + "' is not finite at step " + std::to_string(step)),
        term_(term),
        step_(step) {}
  const std::string& term() const noexcept { return term_; }
  long long step() const noexcept { return step_; }

 private:
  std::string term_;
  long long step_;
};

}  // namespace msatr
