#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "vipatch/targets.hpp"

namespace vipatch {

enum class Transport { kSubprocess, kTcp };

struct RemoteEndpoint {
  Transport transport = Transport::kSubprocess;
  // Shell command line (subprocess) or "host:port" (tcp).
  std::string address;
  int timeout_ms = 30000;
  std::size_t max_in_flight = 1;

  void validate() const;
};

// "stdio:<command line>" or "tcp:<host>:<port>".
RemoteEndpoint parse_endpoint(std::string_view spec);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// --- wire format ------------------------------------------------------------
//
// One JSON object per line, UTF-8.
//   request:  {"id", "task": "count"|"segment"|"fuse", "width", "height",
//              "visible_png_b64", "infrared_png_b64"}
//   response: {"id", "ok": true, "count": number}
//           | {"id", "ok": true, "labels_b64": row-major bytes}
//           | {"id", "ok": true, "fused_png_b64": string}
//           | {"id", "ok": false, "error": string}

std::string_view wire_task_name(Task task);
Task parse_wire_task(std::string_view name);

nlohmann::json make_request(std::string_view id, Task task,
                            const ImagePair& pair);

using RemoteOutput = std::variant<double, ClassMap, Image>;

// Validates a response against the request task and pair size. Throws
// ProtocolError (with an excerpt of the payload) or OracleError for ok=false.
RemoteOutput parse_response(const nlohmann::json& response, Task task,
                            int width, int height);

class RemoteClient;

// Target model served by an external process speaking the wire format.
class RemoteModel final : public TargetModel {
 public:
  RemoteModel(RemoteEndpoint endpoint, Task task, int num_classes = 4);
  ~RemoteModel() override;

  Task task() const override { return task_; }
  CountOutput count(const ImagePair& pair) const override;
  ClassMap segment(const ImagePair& pair) const override;
  Image fuse(const ImagePair& pair) const override;
  int num_classes() const override { return num_classes_; }
  std::size_t max_concurrency() const override;
  std::string describe() const override;

  RemoteOutput query(Task task, const ImagePair& pair) const;

 private:
  RemoteEndpoint endpoint_;
  Task task_;
  int num_classes_;
  std::unique_ptr<RemoteClient> client_;
};

// One-shot convenience: connect, send one request, return the output.
RemoteOutput remote_query(const RemoteEndpoint& endpoint, Task task,
                          const ImagePair& pair);

}  // namespace vipatch
