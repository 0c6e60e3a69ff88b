#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace graphife {

/// Runs one subcommand (`prepare`, `train`, `bench`, `sweep`, `fi-diag`). `args` excludes the
/// program name. Returns 0 on success, 2 on usage or config errors, 1 on runtime errors.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}
