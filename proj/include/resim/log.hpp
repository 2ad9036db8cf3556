#pragma once

#include <functional>
#include <string>

namespace resim {

using LogSink = std::function<void(const std::string&)>;

/// Replaces the warning sink (default: stderr). Pass nullptr to restore the
/// default. Returns the previous sink.
LogSink set_warning_sink(LogSink sink);

void warn(const std::string& message);

}  // namespace resim
