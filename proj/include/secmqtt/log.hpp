#pragma once

#include <functional>
#include <string>

namespace secmqtt {

// Receives one structured event per call, formatted as space-separated
// key=value pairs starting with "event=<name>".
using LogSink = std::function<void(const std::string&)>;

} // namespace secmqtt
