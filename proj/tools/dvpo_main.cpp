// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
//
// Placeholder entry point; subcommands land together with the cli module.
int main() { return 0; }
