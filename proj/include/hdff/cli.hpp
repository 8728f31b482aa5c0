// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hdff {

// Entry point of the `hdff` tool; `args` excludes the program name. Returns
// 0 on success, 1 on a runtime failure and 2 on a usage or configuration
// error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace hdff
