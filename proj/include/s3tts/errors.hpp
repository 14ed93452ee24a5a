#pragma once

#include <stdexcept>
#include <string>

namespace s3tts {

// Base class for every error raised by the library. The CLI maps these to
// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define S3TTS_DEFINE_ERROR(Name)            \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

S3TTS_DEFINE_ERROR(ParameterError);
S3TTS_DEFINE_ERROR(ConfigError);
S3TTS_DEFINE_ERROR(InputError);
S3TTS_DEFINE_ERROR(AlignmentError);
S3TTS_DEFINE_ERROR(FormatError);
S3TTS_DEFINE_ERROR(DataError);
S3TTS_DEFINE_ERROR(LengthError);
S3TTS_DEFINE_ERROR(CorruptCodeError);
S3TTS_DEFINE_ERROR(SequenceError);
S3TTS_DEFINE_ERROR(ShapeError);
// Non-finite value produced during a forward pass or gradient probe.
S3TTS_DEFINE_ERROR(NumericError);

#undef S3TTS_DEFINE_ERROR

}  // namespace s3tts
