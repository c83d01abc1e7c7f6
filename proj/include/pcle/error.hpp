/*
 * pcle-toolkit
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PCLE_ERROR_HPP
#define PCLE_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pcle {

/// Base of every exception thrown by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be read, written or decoded.
class IoError : public Error {
public:
    using Error::Error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Input is valid but carries no usable signal (constant image, zero variance, ...).
class DegenerateInput : public Error {
public:
    using Error::Error;
};

class EmptyCellError : public Error {
public:
    explicit EmptyCellError(std::size_t fibre)
        : Error("fibre " + std::to_string(fibre) + " has no in-FoV pixels to average"), fibre_(fibre) {}

    std::size_t fibre() const noexcept { return fibre_; }

private:
    std::size_t fibre_;
};

} // namespace pcle

#endif // PCLE_ERROR_HPP
