#include "evidenceflow/acquisition.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <future>
#include <random>
#include <set>

#include "evidenceflow/digest.hpp"
#include "evidenceflow/error.hpp"
#include "evidenceflow/fsutil.hpp"
#include "evidenceflow/kvtext.hpp"

namespace evidenceflow {

std::vector<Device> new_devices(const DeviceSnapshot& before, const DeviceSnapshot& after) {
  std::set<std::string_view> known;
  for (const auto& d : before) known.insert(d.device_id);
  std::vector<Device> out;
  for (const auto& d : after)
    if (!known.count(d.device_id)) out.push_back(d);
  return out;
}

DeviceSnapshot FakeDeviceProvider::snapshot() {
  const int n = calls_++;
  DeviceSnapshot snap;
  for (const auto& e : entries_)
    if (e.connected_at <= n && (!e.removed_at || *e.removed_at > n)) snap.push_back(e.device);
  return snap;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

ImageResult MockImager::acquire(const Device& device, const fs::path& dest_dir,
                                std::string_view evidence_name) {
  fs::create_directories(dest_dir);
  const auto file = dest_dir / (std::string(evidence_name) + ".raw");
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create image file", file);

  std::mt19937_64 rng(fnv1a(device.device_id));
  Sha256 hash;
  std::array<std::uint64_t, 8192> block;
  std::uint64_t remaining = device.size_bytes;
  while (remaining > 0) {
    for (auto& w : block) w = rng();
    const auto n = std::min<std::uint64_t>(remaining, sizeof block);
    const std::string_view bytes(reinterpret_cast<const char*>(block.data()), std::size_t(n));
    out.write(bytes.data(), std::streamsize(n));
    hash.update(bytes);
    remaining -= n;
  }
  out.close();
  if (!out) throw IoError("write failed", file);

  ImageResult result{{file}, hash.finish()};
  if (misreport_) result.stated_digest.replace(0, 1, result.stated_digest[0] == '0' ? "1" : "0");
  return result;
}

const OutputLocation* AcquisitionConfig::find_location(std::string_view name) const {
  for (const auto& loc : output_locations)
    if (loc.name == name) return &loc;
  return nullptr;
}

namespace {

std::uint64_t parse_u64(const KvEntry& e) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (e.value.empty() || ec != std::errc{} || end != e.value.data() + e.value.size())
    throw ConfigError("'" + e.key + "' must be a non-negative integer", e.line);
  return v;
}

}  // namespace

AcquisitionConfig parse_acquisition_config(std::string_view text) {
  const auto doc = parse_kv_document(text);
  AcquisitionConfig cfg;
  for (const auto& e : doc.root.entries) {
    if (e.key == "imager") {
      if (e.value != "mock" && e.value != "mock_misreport")
        throw ConfigError("unknown imager '" + e.value + "' (available: mock, mock_misreport)", e.line);
      cfg.imager = e.value;
    } else if (e.key == "device_provider") {
      if (e.value != "fake")
        throw ConfigError("unknown device_provider '" + e.value + "' (available: fake)", e.line);
      cfg.device_provider = e.value;
    } else if (e.key == "staging_root") {
      cfg.staging_root = e.value;
    } else if (e.key == "replication") {
      if (e.value == "sequential") cfg.replication = ReplicationMode::Sequential;
      else if (e.value == "concurrent") cfg.replication = ReplicationMode::Concurrent;
      else throw ConfigError("replication must be sequential or concurrent", e.line);
    } else {
      throw ConfigError("unknown key '" + e.key + "'", e.line);
    }
  }
  if (cfg.staging_root.empty()) throw ConfigError("missing required key 'staging_root'");

  for (const auto& sec : doc.sections) {
    if (sec.name == "location") {
      OutputLocation loc;
      loc.name = sec.require("name").value;
      loc.fileserver_path = sec.require("fileserver_path").value;
      loc.backup_path = sec.require("backup_path").value;
      if (loc.name.empty() || loc.fileserver_path.empty() || loc.backup_path.empty())
        throw ConfigError("location fields must not be empty", sec.line);
      if (cfg.find_location(loc.name))
        throw ConfigError("duplicate location name '" + loc.name + "'", sec.line);
      cfg.output_locations.push_back(std::move(loc));
    } else if (sec.name == "queue") {
      const auto& tool = sec.require("tool");
      const auto& root = sec.require("root");
      if (!cfg.queues.emplace(tool.value, root.value).second)
        throw ConfigError("duplicate queue for tool '" + tool.value + "'", tool.line);
    } else if (sec.name == "fake_device") {
      FakeDeviceProvider::Entry entry;
      entry.device.device_id = sec.require("device_id").value;
      entry.device.description = sec.get("description").value_or("");
      entry.device.size_bytes = parse_u64(sec.require("size_bytes"));
      if (const auto* e = sec.find("connected_at")) entry.connected_at = int(parse_u64(*e));
      if (const auto* e = sec.find("removed_at")) entry.removed_at = int(parse_u64(*e));
      cfg.fake_devices.push_back(std::move(entry));
    } else {
      throw ConfigError("unknown section [" + sec.name + "]", sec.line);
    }
  }
  if (cfg.output_locations.empty()) throw ConfigError("no [location] configured");
  return cfg;
}

AcquisitionConfig load_acquisition_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  try {
    return parse_acquisition_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

EvidenceLayout evidence_layout_for(const fs::path& base, std::string_view case_id,
                                   std::string_view evidence_name) {
  return {base / case_id / evidence_name};
}

bool is_safe_name(std::string_view name) {
  if (name.empty() || name.front() == '.' || name.front() == ' ' || name.back() == ' ')
    return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == ' ' || c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

void validate_request(const AcquisitionRequest& req, const AcquisitionConfig& config,
                      const std::map<std::string, QueueLayout>& queues) {
  if (!config.find_location(req.destination))
    throw ConfigError("destination '" + req.destination + "' is not a configured output location");
  if (!is_safe_name(req.case_id)) throw ConfigError("case id '" + req.case_id + "' is not filesystem-safe");
  if (!is_safe_name(req.evidence_name))
    throw ConfigError("evidence name '" + req.evidence_name + "' is not filesystem-safe");
  if (req.investigator.empty()) throw ConfigError("investigator credential is empty");
  if (req.device.device_id.empty()) throw ConfigError("no device selected");
  std::set<std::string_view> seen;
  for (const auto& tool : req.preparations) {
    if (!seen.insert(tool).second) throw ConfigError("preparation '" + tool + "' selected twice");
    const auto it = queues.find(tool);
    if (it == queues.end()) throw ConfigError("no queue configured for preparation '" + tool + "'");
    if (!it->second.is_initialized())
      throw ConfigError("queue for '" + tool + "' at " + it->second.root().string() +
                        " is not initialized");
  }
}

std::string_view to_string(ReplicaKind kind) {
  return kind == ReplicaKind::Fileserver ? "fileserver" : "backup";
}

bool AcquisitionReport::succeeded() const {
  return steps.size() == std::size_t(kAcquisitionSteps) &&
         std::all_of(steps.begin(), steps.end(), [](const auto& s) { return s.ok; });
}

std::optional<int> AcquisitionReport::failed_step() const {
  for (const auto& s : steps)
    if (!s.ok) return s.number;
  return std::nullopt;
}

namespace {

std::string render_manifest(const std::vector<fs::path>& files, std::string_view digest) {
  std::string out = "algorithm=" + std::string(kDigestAlgorithm) + "\ndigest=" +
                    std::string(digest) + "\n";
  for (const auto& f : files) out += "file=" + f.filename().string() + "\n";
  return out;
}

std::vector<fs::path> copy_replica(const std::vector<fs::path>& sources, const fs::path& dir,
                                   std::string_view manifest) {
  fs::create_directories(dir);
  std::vector<fs::path> out;
  for (const auto& src : sources) {
    const auto dst = dir / src.filename();
    fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
    out.push_back(dst);
  }
  write_file_atomic(dir / "manifest.txt", manifest);
  return out;
}

}  // namespace

AcquisitionReport run_acquisition(const AcquisitionRequest& request,
                                  const AcquisitionConfig& config,
                                  const std::map<std::string, QueueLayout>& queues,
                                  ImagerAdapter& imager, const AcquisitionHooks& hooks,
                                  Logger& log) {
  AcquisitionReport report;
  report.request = request;
  const auto tag = request.case_id + "/" + request.evidence_name;

  // Each step runs only if every earlier one succeeded.
  const auto step = [&](int number, std::string name, auto&& body) -> bool {
    if (!report.steps.empty() && !report.steps.back().ok) return false;
    AcquisitionStep s;
    s.number = number;
    s.name = std::move(name);
    s.started_utc = now_utc();
    try {
      s.ok = body(s);
    } catch (const std::exception& e) {
      s.ok = false;
      s.detail = e.what();
    }
    s.finished_utc = now_utc();
    log.log(s.ok ? LogLevel::Info : LogLevel::Error, "acquire", tag,
            "step " + std::to_string(number) + " " + s.name + (s.ok ? " ok" : " FAILED " + s.detail));
    report.steps.push_back(std::move(s));
    return report.steps.back().ok;
  };

  const OutputLocation* location = config.find_location(request.destination);
  fs::path staging_dir;
  EvidenceLayout backup_layout;
  std::vector<fs::path> fileserver_files, backup_files;

  step(1, "prepare_output", [&](AcquisitionStep& s) {
    validate_request(request, config, queues);
    report.layout = evidence_layout_for(location->fileserver_path, request.case_id, request.evidence_name);
    backup_layout = evidence_layout_for(location->backup_path, request.case_id, request.evidence_name);
    std::error_code ec;
    if (fs::exists(report.layout.image_dir() / "manifest.txt", ec)) {
      s.detail = "evidence already exists at " + report.layout.root.string();
      return false;
    }
    fs::create_directories(report.layout.image_dir());
    fs::create_directories(report.layout.logs_dir());
    for (const auto& tool : request.preparations) fs::create_directories(report.layout.prep_dir(tool));
    staging_dir = config.staging_root / request.case_id / request.evidence_name;
    if (fs::exists(staging_dir, ec) && !fs::is_empty(staging_dir, ec)) {
      s.detail = "staging directory not empty: " + staging_dir.string();
      return false;
    }
    fs::create_directories(staging_dir);
    s.facts.emplace_back("evidence_root", report.layout.root.string());
    s.facts.emplace_back("staging_dir", staging_dir.string());
    return true;
  });

  ImageResult image;
  step(2, "acquire_image", [&](AcquisitionStep& s) {
    image = imager.acquire(request.device, staging_dir, request.evidence_name);
    if (image.image_files.empty()) {
      s.detail = "imager produced no files";
      return false;
    }
    report.staging_files = image.image_files;
    s.facts.emplace_back("stated_digest", image.stated_digest);
    for (const auto& f : image.image_files) s.facts.emplace_back("file", f.string());
    return true;
  });

  step(3, "verify_image", [&](AcquisitionStep& s) {
    const auto check = verify_digest(image.image_files, image.stated_digest);
    s.facts.emplace_back("computed_digest", check.actual);
    if (!check.match) {
      s.detail = "digest mismatch: imager stated " + image.stated_digest;
      return false;
    }
    report.staging_digest = check.actual;
    write_file_atomic(staging_dir / "manifest.txt", render_manifest(image.image_files, check.actual));
    return true;
  });

  const auto manifest = render_manifest(image.image_files, report.staging_digest);
  const auto replicate = [&](ReplicaKind kind) {
    const auto& dir = kind == ReplicaKind::Fileserver ? report.layout.image_dir() : backup_layout.image_dir();
    auto files = copy_replica(image.image_files, dir, manifest);
    if (hooks.after_replicate) hooks.after_replicate(kind, files);
    return files;
  };

  step(4, "replicate", [&](AcquisitionStep& s) {
    if (config.replication == ReplicationMode::Concurrent) {
      auto fs_copy = std::async(std::launch::async, replicate, ReplicaKind::Fileserver);
      auto bk_copy = std::async(std::launch::async, replicate, ReplicaKind::Backup);
      std::exception_ptr err;
      try { fileserver_files = fs_copy.get(); } catch (...) { err = std::current_exception(); }
      try { backup_files = bk_copy.get(); } catch (...) { if (!err) err = std::current_exception(); }
      if (err) std::rethrow_exception(err);
    } else {
      fileserver_files = replicate(ReplicaKind::Fileserver);
      backup_files = replicate(ReplicaKind::Backup);
    }
    s.facts.emplace_back("fileserver", report.layout.image_dir().string());
    s.facts.emplace_back("backup", backup_layout.image_dir().string());
    return true;
  });
  if (report.failed_step() == 4) {
    report.flagged_replicas = {report.layout.image_dir(), backup_layout.image_dir()};
  }

  step(5, "verify_replicas", [&](AcquisitionStep& s) {
    const auto check = [&](const std::vector<fs::path>& files) {
      return verify_digest(files, report.staging_digest);
    };
    DigestCheck fs_check, bk_check;
    if (config.replication == ReplicationMode::Concurrent) {
      auto a = std::async(std::launch::async, check, std::cref(fileserver_files));
      auto b = std::async(std::launch::async, check, std::cref(backup_files));
      fs_check = a.get();
      bk_check = b.get();
    } else {
      fs_check = check(fileserver_files);
      bk_check = check(backup_files);
    }
    s.facts.emplace_back("fileserver_digest", fs_check.actual);
    s.facts.emplace_back("backup_digest", bk_check.actual);
    std::string bad;
    if (!fs_check.match) {
      report.flagged_replicas.push_back(report.layout.image_dir());
      bad += " fileserver";
    }
    if (!bk_check.match) {
      report.flagged_replicas.push_back(backup_layout.image_dir());
      bad += " backup";
    }
    if (!bad.empty()) {
      s.detail = "replica digest mismatch:" + bad;
      return false;
    }
    return true;
  });

  step(6, "delete_staging", [&](AcquisitionStep& s) {
    for (const auto& f : image.image_files) fs::remove(f);
    fs::remove(staging_dir / "manifest.txt");
    std::error_code ec;
    fs::remove(staging_dir, ec);  // only if now empty
    s.facts.emplace_back("staging_dir", staging_dir.string());
    return true;
  });

  step(7, "enqueue_preparations", [&](AcquisitionStep& s) {
    const auto source = fileserver_files.front();
    for (const auto& tool : request.preparations) {
      JobSpec job;
      job.job_id = make_job_id();
      job.tool = tool;
      job.source = source;
      job.source_root = report.layout.image_dir();
      job.output = report.layout.prep_dir(tool);
      job.case_id = request.case_id;
      job.evidence_name = request.evidence_name;
      job.requested_by = request.investigator;
      job.created_utc = now_utc();
      job.params.emplace_back("device_id", request.device.device_id);
      job.params.emplace_back("image_digest", report.staging_digest);
      const auto path = submit_job(queues.at(tool), job);
      report.enqueued_jobs.push_back(path);
      s.facts.emplace_back("job." + tool, path.string());
    }
    return true;
  });

  std::error_code ec;
  const bool layout_ready = !report.steps.empty() && report.steps.front().ok;
  if (layout_ready && fs::is_directory(report.layout.logs_dir(), ec)) {
    try {
      write_file_atomic(report.layout.report(), render_acquisition_report(report));
    } catch (const std::exception& e) {
      log.log(LogLevel::Error, "acquire", tag, std::string("report_write_failed ") + e.what());
    }
  }
  return report;
}

std::string render_acquisition_report(const AcquisitionReport& r) {
  std::string out;
  const auto put = [&out](const std::string& k, const std::string& v) {
    std::string value = v;
    for (auto& c : value)
      if (c == '\n' || c == '\r') c = ' ';
    out += k + "=" + value + "\n";
  };
  put("version", "1");
  put("result", r.succeeded() ? "success" : "failed");
  if (const auto f = r.failed_step()) put("failed_step", std::to_string(*f));
  put("case_id", r.request.case_id);
  put("evidence_name", r.request.evidence_name);
  put("investigator", r.request.investigator);
  put("device_id", r.request.device.device_id);
  put("destination", r.request.destination);
  put("evidence_root", r.layout.root.string());
  put("digest_algorithm", std::string(kDigestAlgorithm));
  put("staging_digest", r.staging_digest);
  for (const auto& s : r.steps) {
    const auto p = "step." + std::to_string(s.number) + ".";
    put(p + "name", s.name);
    put(p + "status", s.ok ? "ok" : "failed");
    put(p + "started_utc", format_iso_utc(s.started_utc));
    put(p + "finished_utc", format_iso_utc(s.finished_utc));
    if (!s.detail.empty()) put(p + "detail", s.detail);
    for (const auto& [k, v] : s.facts) put(p + k, v);
  }
  for (const auto& f : r.flagged_replicas) put("flagged_replica", f.string());
  for (const auto& j : r.enqueued_jobs) put("enqueued_job", j.string());
  return out;
}

}  // namespace evidenceflow
