// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/cli.hpp"

int main(int argc, char** argv) { return gecolab::cli::run(argc, argv); }
