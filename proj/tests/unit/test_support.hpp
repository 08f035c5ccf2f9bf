/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <doctest.h>

#include "vlplan/error.hpp"

/// Asserts that the expression throws vlplan::Error with the given code.
#define CHECK_ERRC(code_, ...)                               \
  do {                                                       \
    bool caught_ = false;                                    \
    try {                                                    \
      __VA_ARGS__;                                           \
    } catch (const vlplan::Error& e_) {                      \
      caught_ = true;                                        \
      CHECK(e_.code() == vlplan::Errc::code_);               \
      if (e_.code() != vlplan::Errc::code_)                  \
        MESSAGE("actual error: " << e_.what());              \
    }                                                        \
    CHECK_MESSAGE(caught_, "expected " #code_ ", no throw"); \
  } while (0)
