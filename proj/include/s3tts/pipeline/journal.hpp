#pragma once

#include <chrono>
#include <fstream>
#include <string>

#include <json.hpp>

#include "s3tts/errors.hpp"

namespace s3tts {

// Newline-delimited JSON records, one per event. Keys are emitted in sorted
// order, so with wall time left off the file is a pure function of the run.
class MetricsJournal {
 public:
  MetricsJournal(const std::string& path, bool wall_time = false)
      : out_(path, std::ios::trunc), path_(path), wall_time_(wall_time), start_(std::chrono::steady_clock::now()) {
    if (!out_) throw InputError("cannot open metrics journal " + path);
  }

  void write(const std::string& event, nlohmann::json fields = nlohmann::json::object()) {
    fields["event"] = event;
    fields["seq"] = seq_++;
    if (wall_time_)
      fields["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    out_ << fields.dump() << '\n';
    out_.flush();
    if (!out_) throw InputError("write to metrics journal " + path_ + " failed");
  }

  const std::string& path() const { return path_; }

 private:
  std::ofstream out_;
  std::string path_;
  bool wall_time_;
  std::chrono::steady_clock::time_point start_;
  long seq_ = 0;
};

}  // namespace s3tts
