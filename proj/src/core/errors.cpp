#include "msatr/errors.hpp"

namespace msatr {

const char* error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Config: return "config";
    case ErrorKind::Partition: return "partition";
    case ErrorKind::Checkpoint: return "checkpoint";
    case ErrorKind::Dataset: return "dataset";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace msatr
