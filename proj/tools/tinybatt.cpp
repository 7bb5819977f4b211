// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tinybatt/cli.hpp"

int main(int argc, char** argv) { return tinybatt::cli::run_cli(argc, argv); }
