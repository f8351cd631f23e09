#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "netperf/net_model.hpp"

namespace netperf {

using Json = nlohmann::json;

Json to_json(const TrafficDescriptor& desc);
TrafficDescriptor descriptor_from_json(const Json& j);

Json to_json(const PerfLabels& labels);
PerfLabels labels_from_json(const Json& j);

/// Canonical document: {"topology", "ports", "flows", "labels"?, "meta"?}.
Json to_json(const NetworkSample& sample);
NetworkSample sample_from_json(const Json& j);

NetworkSample read_sample(const std::filesystem::path& path);
void write_sample(const std::filesystem::path& path, const NetworkSample& sample);

/// Newline-delimited JSON, one sample per line.
std::vector<NetworkSample> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const std::vector<NetworkSample>& samples);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace netperf
