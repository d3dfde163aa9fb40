// SPDX-License-Identifier: Apache-2.0
#include "kinmerge/error.hpp"

namespace kinmerge {

void throw_data(const std::string& what) { throw Error(ErrorKind::data, what); }
void throw_io(const std::string& what) { throw Error(ErrorKind::io, what); }
void throw_usage(const std::string& what) { throw Error(ErrorKind::usage, what); }
void throw_evaluator(const std::string& what) { throw Error(ErrorKind::evaluator, what); }

}  // namespace kinmerge
