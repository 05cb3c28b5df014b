#pragma once

#include <stdexcept>
#include <string>

namespace xmodal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// dataset
class EmptyStream : public Error { public: using Error::Error; };
class EmptySpan : public Error { public: using Error::Error; };
class TooFewSubjects : public Error { public: using Error::Error; };
class MissingClass : public Error { public: using Error::Error; };
class MissingChannel : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };

// models
class ShapeError : public Error { public: using Error::Error; };
class ConfigMismatch : public Error { public: using Error::Error; };

// losses
class DegenerateVector : public Error { public: using Error::Error; };
class ShapeMismatch : public Error { public: using Error::Error; };
class AlphaRange : public Error { public: using Error::Error; };
class LabelRange : public Error { public: using Error::Error; };

// training / evaluation
class AlignmentError : public Error { public: using Error::Error; };
class EmptyFold : public Error { public: using Error::Error; };
class LeakageError : public Error { public: using Error::Error; };
class SubjectMismatch : public Error { public: using Error::Error; };
class TooFewWindows : public Error { public: using Error::Error; };
class UnknownKind : public Error { public: using Error::Error; };

}  // namespace xmodal
