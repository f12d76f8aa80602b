/*
 * Copyright 2026 The PCNN Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PCNN_ERROR_HPP_
#define PCNN_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pcnn {

// Base of every error raised by the library. Subclasses name the failure
// kind; the message carries the context.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PCNN_DECLARE_ERROR(Name)        \
  class Name : public Error {           \
   public:                              \
    explicit Name(const std::string& m) \
        : Error(#Name ": " + m) {}      \
  }

PCNN_DECLARE_ERROR(InvalidShape);
PCNN_DECLARE_ERROR(NonScalarLoss);
PCNN_DECLARE_ERROR(NonDeterministic);
PCNN_DECLARE_ERROR(DegenerateBatch);
PCNN_DECLARE_ERROR(InvalidLabel);
PCNN_DECLARE_ERROR(InvalidArgument);
PCNN_DECLARE_ERROR(ImageTooSmall);
PCNN_DECLARE_ERROR(TargetTooSmall);
PCNN_DECLARE_ERROR(InvalidConfig);
PCNN_DECLARE_ERROR(IoError);
PCNN_DECLARE_ERROR(EmptyDataset);
PCNN_DECLARE_ERROR(UnsupportedVersion);
PCNN_DECLARE_ERROR(CorruptCheckpoint);

#undef PCNN_DECLARE_ERROR

class MalformedRow : public Error {
 public:
  MalformedRow(std::size_t row, const std::string& m)
      : Error("MalformedRow: row " + std::to_string(row) + ": " + m),
        row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class DivergenceDetected : public Error {
 public:
  DivergenceDetected(std::size_t epoch, std::size_t batch)
      : Error("DivergenceDetected: non-finite loss at epoch " +
              std::to_string(epoch) + ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace pcnn

#endif  // PCNN_ERROR_HPP_
