#include "nids/error.hpp"

namespace nids {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::EmptyData: return "empty-dataset error";
    case ErrorKind::Mapping: return "mapping error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Balancing: return "balancing error";
    case ErrorKind::Argument: return "argument error";
    case ErrorKind::DegenerateLeaf: return "degenerate-leaf error";
    case ErrorKind::Divergence: return "divergence error";
    case ErrorKind::UndefinedAuc: return "undefined-AUC error";
    case ErrorKind::Ordering: return "ordering error";
    case ErrorKind::Stage: return "stage failure";
    case ErrorKind::Internal: return "internal error";
  }
  return "error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return 2;
    case ErrorKind::Parse:
    case ErrorKind::EmptyData:
    case ErrorKind::Mapping:
    case ErrorKind::Shape:
    case ErrorKind::Balancing:
      return 3;
    default:
      return 4;
  }
}

}  // namespace nids
