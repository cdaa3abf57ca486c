#include "semfx/error.hpp"

namespace semfx {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::domain: return "domain";
    case ErrorKind::degenerate_input: return "degenerate-input";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::non_convergence: return "non-convergence";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::singular_information: return "singular-information";
    case ErrorKind::ill_conditioned_quantile: return "ill-conditioned-quantile";
    case ErrorKind::config: return "config";
    case ErrorKind::parse: return "parse";
  }
  return "unknown";
}

}  // namespace semfx
