// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/cli.hpp"

int main(int argc, char** argv) { return hdff::dispatch(argc, argv); }
