#pragma once

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace support {

/// Code of the debias::Error thrown by `f`; kIoError with a test failure when nothing is thrown.
template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::kIoError;
}

}  // namespace support
