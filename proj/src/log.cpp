#include "resim/log.hpp"

#include <iostream>
#include <mutex>

namespace resim {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& current_sink() {
  static LogSink sink;
  return sink;
}

}  // namespace

LogSink set_warning_sink(LogSink sink) {
  std::lock_guard lock(sink_mutex());
  LogSink prev = std::move(current_sink());
  current_sink() = std::move(sink);
  return prev;
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (current_sink()) {
    current_sink()(message);
  } else {
    std::cerr << "warning: " << message << "\n";
  }
}

}  // namespace resim
