#include "vipatch/remote.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <openssl/evp.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <future>
#include <map>
#include <mutex>
#include <semaphore>
#include <thread>

#include "vipatch/errors.hpp"

extern char** environ;

namespace vipatch {

using nlohmann::json;

namespace {

constexpr std::size_t kExcerptLength = 160;

std::string excerpt(std::string_view text) {
  if (text.size() <= kExcerptLength) return std::string(text);
  return std::string(text.substr(0, kExcerptLength)) + "...";
}

std::string system_error(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

}  // namespace

void RemoteEndpoint::validate() const {
  if (timeout_ms <= 0) throw ConfigError("remote timeout must be > 0 ms");
  if (max_in_flight < 1) throw ConfigError("max in-flight must be >= 1");
  if (address.empty()) throw ConfigError("remote endpoint needs an address");
}

RemoteEndpoint parse_endpoint(std::string_view spec) {
  RemoteEndpoint endpoint;
  if (spec.starts_with("stdio:")) {
    endpoint.transport = Transport::kSubprocess;
    endpoint.address = std::string(spec.substr(6));
  } else if (spec.starts_with("tcp:")) {
    endpoint.transport = Transport::kTcp;
    endpoint.address = std::string(spec.substr(4));
    if (endpoint.address.rfind(':') == std::string::npos) {
      throw ConfigError("tcp endpoint must be tcp:<host>:<port>");
    }
  } else {
    throw ConfigError("endpoint must start with 'stdio:' or 'tcp:', got '" +
                      std::string(spec) + "'");
  }
  endpoint.validate();
  return endpoint;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw ProtocolError("base64 payload length is not a multiple of 4");
  }
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(
      out.data(), reinterpret_cast<const unsigned char*>(text.data()),
      static_cast<int>(text.size()));
  if (n < 0) throw ProtocolError("invalid base64 payload");
  std::size_t size = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  if (!text.empty() && text.back() == '=') --size;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --size;
  out.resize(size);
  return out;
}

std::string_view wire_task_name(Task task) {
  switch (task) {
    case Task::kCounting:
      return "count";
    case Task::kSegmentation:
      return "segment";
    case Task::kFusion:
      return "fuse";
  }
  return "count";
}

Task parse_wire_task(std::string_view name) {
  if (name == "count") return Task::kCounting;
  if (name == "segment") return Task::kSegmentation;
  if (name == "fuse") return Task::kFusion;
  throw ProtocolError("unknown task '" + std::string(name) + "'");
}

json make_request(std::string_view id, Task task, const ImagePair& pair) {
  return json{{"id", std::string(id)},
              {"task", std::string(wire_task_name(task))},
              {"width", pair.width()},
              {"height", pair.height()},
              {"visible_png_b64", base64_encode(encode_png(pair.visible()))},
              {"infrared_png_b64", base64_encode(encode_png(pair.infrared()))}};
}

RemoteOutput parse_response(const json& response, Task task, int width,
                            int height) {
  const std::string dump = response.dump();
  auto fail = [&](const std::string& why) -> ProtocolError {
    return ProtocolError(why + " in response: " + excerpt(dump));
  };
  if (!response.is_object()) throw fail("expected a JSON object");
  if (!response.contains("ok") || !response["ok"].is_boolean()) {
    throw fail("missing boolean 'ok'");
  }
  if (!response["ok"].get<bool>()) {
    std::string message = "remote model reported failure";
    if (response.contains("error") && response["error"].is_string()) {
      message += ": " + response["error"].get<std::string>();
    }
    throw OracleError(message);
  }
  switch (task) {
    case Task::kCounting: {
      if (!response.contains("count") || !response["count"].is_number()) {
        throw fail("missing numeric 'count'");
      }
      const double count = response["count"].get<double>();
      if (!std::isfinite(count)) throw fail("non-finite 'count'");
      return count;
    }
    case Task::kSegmentation: {
      if (!response.contains("labels_b64") ||
          !response["labels_b64"].is_string()) {
        throw fail("missing string 'labels_b64'");
      }
      auto labels = base64_decode(response["labels_b64"].get<std::string>());
      if (labels.size() != static_cast<std::size_t>(width) * height) {
        throw fail("class map holds " + std::to_string(labels.size()) +
                   " labels, expected " + std::to_string(width) + "x" +
                   std::to_string(height));
      }
      return ClassMap(width, height, std::move(labels));
    }
    case Task::kFusion: {
      if (!response.contains("fused_png_b64") ||
          !response["fused_png_b64"].is_string()) {
        throw fail("missing string 'fused_png_b64'");
      }
      Image fused;
      try {
        fused = decode_png(
            base64_decode(response["fused_png_b64"].get<std::string>()));
      } catch (const FormatError& e) {
        throw fail(std::string("undecodable fused image (") + e.what() + ")");
      }
      if (!fused.same_size(width, height)) {
        throw fail("fused image is " + std::to_string(fused.width()) + "x" +
                   std::to_string(fused.height()) + ", expected " +
                   std::to_string(width) + "x" + std::to_string(height));
      }
      return to_grayscale(fused);
    }
  }
  throw fail("unhandled task");
}

// Owns the transport and matches responses to requests by id. A background
// reader thread dispatches each response line to the waiting caller.
class RemoteClient {
 public:
  explicit RemoteClient(const RemoteEndpoint& endpoint)
      : endpoint_(endpoint),
        slots_(static_cast<std::ptrdiff_t>(endpoint.max_in_flight)) {
    endpoint_.validate();
    ::signal(SIGPIPE, SIG_IGN);
    if (endpoint_.transport == Transport::kSubprocess) {
      spawn();
    } else {
      connect_tcp();
    }
    reader_ = std::jthread([this](std::stop_token stop) { read_loop(stop); });
  }

  ~RemoteClient() {
    reader_.request_stop();
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (endpoint_.transport == Transport::kTcp && read_fd_ >= 0) {
      ::shutdown(read_fd_, SHUT_RDWR);
    }
    if (reader_.joinable()) reader_.join();
    if (read_fd_ >= 0) ::close(read_fd_);
    reap_child();
  }

  RemoteClient(const RemoteClient&) = delete;
  RemoteClient& operator=(const RemoteClient&) = delete;

  json request(Task task, const ImagePair& pair) {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const std::string id = std::to_string(next_id_.fetch_add(1));
    std::future<json> reply;
    {
      std::lock_guard lock(mutex_);
      if (!broken_.empty()) throw ProtocolError(broken_);
      reply = pending_[id].get_future();
    }
    std::string line = make_request(id, task, pair).dump();
    line += '\n';
    try {
      write_all(line);
    } catch (...) {
      std::lock_guard lock(mutex_);
      pending_.erase(id);
      throw;
    }
    if (reply.wait_for(std::chrono::milliseconds(endpoint_.timeout_ms)) !=
        std::future_status::ready) {
      std::lock_guard lock(mutex_);
      pending_.erase(id);
      throw TimeoutError("remote request " + id + " timed out after " +
                         std::to_string(endpoint_.timeout_ms) + " ms");
    }
    return reply.get();
  }

  std::size_t max_in_flight() const { return endpoint_.max_in_flight; }

 private:
  void spawn() {
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0 ||
        ::pipe2(from_child, O_CLOEXEC) != 0) {
      throw IoError(system_error("pipe"));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    const std::string command = endpoint_.address;
    const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
    const int rc = posix_spawn(&child_, "/bin/sh", &actions, nullptr,
                               const_cast<char* const*>(argv), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    if (rc != 0) {
      ::close(to_child[1]);
      ::close(from_child[0]);
      errno = rc;
      throw IoError(system_error("cannot start '" + command + "'"));
    }
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
  }

  void connect_tcp() {
    const auto colon = endpoint_.address.rfind(':');
    const std::string host = endpoint_.address.substr(0, colon);
    const std::string port = endpoint_.address.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found);
        rc != 0) {
      throw IoError("cannot resolve " + endpoint_.address + ": " +
                    gai_strerror(rc));
    }
    int fd = -1;
    for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
      fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(found);
    if (fd < 0) throw IoError(system_error("cannot connect to " + endpoint_.address));
    read_fd_ = fd;
    write_fd_ = fd;
  }

  void write_all(const std::string& data) {
    std::lock_guard lock(write_mutex_);
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = endpoint_.transport == Transport::kTcp
                            ? ::send(write_fd_, data.data() + done,
                                     data.size() - done, MSG_NOSIGNAL)
                            : ::write(write_fd_, data.data() + done,
                                      data.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(system_error("remote endpoint write failed"));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  void read_loop(std::stop_token stop) {
    std::string buffer;
    char chunk[65536];
    while (!stop.stop_requested()) {
      pollfd pfd{read_fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, 50);
      if (ready < 0) {
        if (errno == EINTR) continue;
        fail_all(system_error("poll on remote endpoint failed"));
        return;
      }
      if (ready == 0) continue;
      const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        fail_all(system_error("remote endpoint read failed"));
        return;
      }
      if (n == 0) {
        fail_all("remote endpoint closed the connection");
        return;
      }
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::size_t start = 0;
      for (auto nl = buffer.find('\n', start); nl != std::string::npos;
           nl = buffer.find('\n', start)) {
        dispatch(std::string_view(buffer).substr(start, nl - start));
        start = nl + 1;
      }
      buffer.erase(0, start);
    }
  }

  void dispatch(std::string_view line) {
    if (line.empty()) return;
    json message = json::parse(line, nullptr, false);
    if (message.is_discarded() || !message.is_object() ||
        !message.contains("id") || !message["id"].is_string()) {
      // Without an id the response cannot be matched; every waiter fails.
      fail_all("malformed response line: " + excerpt(line));
      return;
    }
    std::lock_guard lock(mutex_);
    auto it = pending_.find(message["id"].get<std::string>());
    if (it == pending_.end()) return;  // late answer to a timed-out request
    it->second.set_value(std::move(message));
    pending_.erase(it);
  }

  void fail_all(const std::string& why) {
    std::lock_guard lock(mutex_);
    if (broken_.empty()) broken_ = why;
    for (auto& [id, promise] : pending_) {
      promise.set_exception(std::make_exception_ptr(ProtocolError(why)));
    }
    pending_.clear();
  }

  void reap_child() {
    if (child_ <= 0) return;
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(child_, nullptr, WNOHANG) != 0) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ::kill(child_, SIGKILL);
    ::waitpid(child_, nullptr, 0);
  }

  RemoteEndpoint endpoint_;
  std::counting_semaphore<> slots_;
  pid_t child_ = -1;
  int read_fd_ = -1;
  int write_fd_ = -1;
  std::atomic<std::uint64_t> next_id_{1};
  std::mutex write_mutex_;
  std::mutex mutex_;
  std::map<std::string, std::promise<json>> pending_;
  std::string broken_;
  std::jthread reader_;
};

RemoteModel::RemoteModel(RemoteEndpoint endpoint, Task task, int num_classes)
    : endpoint_(std::move(endpoint)),
      task_(task),
      num_classes_(task == Task::kSegmentation ? num_classes : 0),
      client_(std::make_unique<RemoteClient>(endpoint_)) {}

RemoteModel::~RemoteModel() = default;

RemoteOutput RemoteModel::query(Task task, const ImagePair& pair) const {
  return parse_response(client_->request(task, pair), task, pair.width(),
                        pair.height());
}

CountOutput RemoteModel::count(const ImagePair& pair) const {
  return {std::get<double>(query(Task::kCounting, pair)), std::nullopt};
}

ClassMap RemoteModel::segment(const ImagePair& pair) const {
  return std::get<ClassMap>(query(Task::kSegmentation, pair));
}

Image RemoteModel::fuse(const ImagePair& pair) const {
  return std::get<Image>(query(Task::kFusion, pair));
}

std::size_t RemoteModel::max_concurrency() const {
  return client_->max_in_flight();
}

std::string RemoteModel::describe() const {
  return std::string("remote(") +
         (endpoint_.transport == Transport::kTcp ? "tcp:" : "stdio:") +
         endpoint_.address + ")";
}

RemoteOutput remote_query(const RemoteEndpoint& endpoint, Task task,
                          const ImagePair& pair) {
  RemoteModel model(endpoint, task);
  return model.query(task, pair);
}

}  // namespace vipatch
