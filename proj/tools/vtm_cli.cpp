// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/commands.hpp"

int main(int argc, char** argv) { return vtm::run_cli(argc, argv); }
