#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evidenceflow/layout.hpp"
#include "evidenceflow/log.hpp"
#include "evidenceflow/timeutil.hpp"

namespace evidenceflow {

struct Device {
  std::string device_id;
  std::string description;
  std::uint64_t size_bytes = 0;

  bool operator==(const Device&) const = default;
};

using DeviceSnapshot = std::vector<Device>;

// Devices present in `after` but not in `before` (by device_id), in the
// order `after` lists them.
std::vector<Device> new_devices(const DeviceSnapshot& before, const DeviceSnapshot& after);

class DeviceProvider {
 public:
  virtual ~DeviceProvider() = default;
  virtual DeviceSnapshot snapshot() = 0;
};

// Scripted provider: the n-th snapshot() call (0-based) sees every entry with
// connected_at <= n and (no removed_at or removed_at > n).
class FakeDeviceProvider : public DeviceProvider {
 public:
  struct Entry {
    Device device;
    int connected_at = 0;
    std::optional<int> removed_at;
  };

  explicit FakeDeviceProvider(std::vector<Entry> entries) : entries_(std::move(entries)) {}
  DeviceSnapshot snapshot() override;

 private:
  std::vector<Entry> entries_;
  int calls_ = 0;
};

struct ImageResult {
  std::vector<std::filesystem::path> image_files;
  std::string stated_digest;  // over the concatenated image files
};

// Mirrors a command-line imager: acquire the device into dest_dir.
class ImagerAdapter {
 public:
  virtual ~ImagerAdapter() = default;
  virtual ImageResult acquire(const Device& device, const std::filesystem::path& dest_dir,
                              std::string_view evidence_name) = 0;
};

// Writes one raw file of size_bytes deterministic pseudo-random bytes (seeded
// by device_id) and reports the digest of what it wrote. With
// `misreport_digest` set it states a wrong digest, to exercise verification.
class MockImager : public ImagerAdapter {
 public:
  explicit MockImager(bool misreport_digest = false) : misreport_(misreport_digest) {}
  ImageResult acquire(const Device& device, const std::filesystem::path& dest_dir,
                      std::string_view evidence_name) override;

 private:
  bool misreport_;
};

struct OutputLocation {
  std::string name;
  std::filesystem::path fileserver_path;
  std::filesystem::path backup_path;
};

enum class ReplicationMode { Sequential, Concurrent };

struct AcquisitionConfig {
  std::vector<OutputLocation> output_locations;
  std::string imager = "mock";
  std::string device_provider = "fake";
  std::filesystem::path staging_root;
  ReplicationMode replication = ReplicationMode::Sequential;
  std::map<std::string, std::filesystem::path> queues;  // tool -> queue root
  std::vector<FakeDeviceProvider::Entry> fake_devices;

  const OutputLocation* find_location(std::string_view name) const;
};

// Throws ConfigError with line numbers.
AcquisitionConfig parse_acquisition_config(std::string_view text);
AcquisitionConfig load_acquisition_config(const std::filesystem::path& path);

struct AcquisitionRequest {
  Device device;
  std::string destination;  // OutputLocation name
  std::string case_id;
  std::string evidence_name;
  std::string investigator;  // recorded as an identifier only
  std::vector<std::string> preparations;  // tool names
};

// `<fileserver>/<case_id>/<evidence_name>/` with image/, prep/<tool>/, logs/.
struct EvidenceLayout {
  std::filesystem::path root;

  std::filesystem::path image_dir() const { return root / "image"; }
  std::filesystem::path prep_dir(std::string_view tool) const { return root / "prep" / tool; }
  std::filesystem::path logs_dir() const { return root / "logs"; }
  std::filesystem::path manifest() const { return image_dir() / "manifest.txt"; }
  std::filesystem::path report() const { return logs_dir() / "acquisition_report.txt"; }
};

EvidenceLayout evidence_layout_for(const std::filesystem::path& base, std::string_view case_id,
                                   std::string_view evidence_name);

// True for names usable as one path component: [A-Za-z0-9 _.-], no leading
// '.' or space, not empty.
bool is_safe_name(std::string_view name);

// Throws ConfigError when the request cannot be run against this config and
// these queues (unknown destination, unsafe names, unmapped preparation).
void validate_request(const AcquisitionRequest& request, const AcquisitionConfig& config,
                      const std::map<std::string, QueueLayout>& queues);

enum class ReplicaKind { Fileserver, Backup };
std::string_view to_string(ReplicaKind kind);

struct AcquisitionHooks {
  // Runs after a replica has been copied and before it is verified.
  std::function<void(ReplicaKind, const std::vector<std::filesystem::path>&)> after_replicate;
};

struct AcquisitionStep {
  int number = 0;
  std::string name;
  bool ok = false;
  UtcTime started_utc{};
  UtcTime finished_utc{};
  std::string detail;
  std::vector<std::pair<std::string, std::string>> facts;  // digests, paths
};

struct AcquisitionReport {
  AcquisitionRequest request;
  EvidenceLayout layout;
  std::vector<AcquisitionStep> steps;
  std::string staging_digest;
  std::vector<std::filesystem::path> staging_files;
  std::vector<std::filesystem::path> enqueued_jobs;
  std::vector<std::filesystem::path> flagged_replicas;  // left for operator action

  bool succeeded() const;
  std::optional<int> failed_step() const;
};

inline constexpr int kAcquisitionSteps = 7;

// The full Fig.-2 flow: layout, image, verify, replicate, verify replicas,
// delete staging, enqueue preparations. Stops at the first failing step; the
// staging copy is only deleted once both replicas verify. The report is also
// written to logs/acquisition_report.txt when the evidence root exists.
AcquisitionReport run_acquisition(const AcquisitionRequest& request,
                                  const AcquisitionConfig& config,
                                  const std::map<std::string, QueueLayout>& queues,
                                  ImagerAdapter& imager, const AcquisitionHooks& hooks = {},
                                  Logger& log = Logger::null());

std::string render_acquisition_report(const AcquisitionReport& report);

}  // namespace evidenceflow
