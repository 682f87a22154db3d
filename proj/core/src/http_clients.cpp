#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "sgkit/clients.hpp"
#include "sgkit/digest.hpp"
#include "sgkit/encoder.hpp"

namespace sgkit {

namespace {

using njson = nlohmann::json;

struct UrlParts {
  std::string base;  // scheme://host[:port]
  std::string path;  // /v1/...
};

Expected<UrlParts, ClientError> split_url(const std::string& url) {
  std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    return ClientError{"config", "endpoint url must start with http:// or https://: " + url};
  }
  std::size_t path_start = url.find('/', scheme_end + 3);
  UrlParts parts;
  if (path_start == std::string::npos) {
    parts.base = url;
    parts.path = "/";
  } else {
    parts.base = url.substr(0, path_start);
    parts.path = url.substr(path_start);
  }
  return parts;
}

std::string base64_encode(std::string_view data) {
  static const char alphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 2 < data.size()) {
    std::uint32_t v = (static_cast<unsigned char>(data[i]) << 16) |
                      (static_cast<unsigned char>(data[i + 1]) << 8) |
                      static_cast<unsigned char>(data[i + 2]);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += alphabet[v & 63];
    i += 3;
  }
  if (i + 1 == data.size()) {
    std::uint32_t v = static_cast<unsigned char>(data[i]) << 16;
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == data.size()) {
    std::uint32_t v = (static_cast<unsigned char>(data[i]) << 16) |
                      (static_cast<unsigned char>(data[i + 1]) << 8);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

Expected<std::string, ClientError> base64_decode(std::string_view data) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  int buffer = 0;
  int bits = 0;
  for (char c : data) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    int v = value_of(c);
    if (v < 0) return ClientError{"protocol", "invalid base64 payload"};
    buffer = (buffer << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((buffer >> bits) & 0xFF);
    }
  }
  return out;
}

bool is_remote_ref(const std::string& ref) {
  return ref.rfind("http://", 0) == 0 || ref.rfind("https://", 0) == 0 ||
         ref.rfind("data:", 0) == 0;
}

Expected<std::string, ClientError> image_ref_to_url(const std::string& ref) {
  if (is_remote_ref(ref)) return ref;
  std::ifstream in(ref, std::ios::binary);
  if (!in) return ClientError{"config", "cannot read image file: " + ref};
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string bytes = buf.str();
  std::string mime = "image/jpeg";
  if (ref.size() >= 4 && ref.substr(ref.size() - 4) == ".png") mime = "image/png";
  return "data:" + mime + ";base64," + base64_encode(bytes);
}

httplib::Headers auth_headers(const EndpointConfig& config) {
  httplib::Headers headers;
  if (!config.api_key_env.empty()) {
    const char* key = std::getenv(config.api_key_env.c_str());
    if (key != nullptr && key[0] != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  return headers;
}

Expected<std::string, ClientError> post_json(const EndpointConfig& config,
                                             const std::string& body,
                                             std::string* content_type_out = nullptr) {
  auto parts = split_url(config.url);
  if (!parts) return parts.error();
  httplib::Client client(parts->base);
  client.set_connection_timeout(config.timeout_sec, 0);
  client.set_read_timeout(config.timeout_sec, 0);
  client.set_write_timeout(config.timeout_sec, 0);
  auto result = client.Post(parts->path, auth_headers(config), body, "application/json");
  if (!result) {
    return ClientError{"http", "request to " + config.url +
                                   " failed: " + httplib::to_string(result.error())};
  }
  if (result->status < 200 || result->status >= 300) {
    return ClientError{"http", "endpoint returned status " + std::to_string(result->status) +
                                   ": " + result->body.substr(0, 512)};
  }
  if (content_type_out != nullptr) {
    *content_type_out = result->get_header_value("Content-Type");
  }
  return result->body;
}

// Chat-completion protocol: prompt text plus one image part, reply text in
// choices[0].message.content.
class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(EndpointConfig config) : config_(std::move(config)) {}

  Expected<std::string, ClientError> complete(const std::string& prompt,
                                              const std::string& image_ref) override {
    auto image_url = image_ref_to_url(image_ref);
    if (!image_url) return image_url.error();
    njson body = {
        {"model", config_.model},
        {"temperature", config_.temperature},
        {"messages",
         njson::array({njson{{"role", "user"},
                             {"content", njson::array({njson{{"type", "text"}, {"text", prompt}},
                                                       njson{{"type", "image_url"},
                                                             {"image_url",
                                                              njson{{"url", *image_url}}}}})}}})},
    };
    auto reply = post_json(config_, body.dump());
    if (!reply) return reply.error();
    njson doc = njson::parse(*reply, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) return ClientError{"protocol", "endpoint reply is not JSON"};
    try {
      const njson& content = doc.at("choices").at(0).at("message").at("content");
      if (content.is_string()) return content.get<std::string>();
      if (content.is_array()) {  // providers that return content parts
        std::string text;
        for (const njson& part : content) {
          if (part.contains("text") && part.at("text").is_string()) {
            text += part.at("text").get<std::string>();
          }
        }
        return text;
      }
    } catch (const njson::exception&) {
    }
    return ClientError{"protocol", "reply lacks choices[0].message.content"};
  }

 private:
  EndpointConfig config_;
};

// Image generation: POST {"prompt": ...}; the reply is either raw image
// bytes or JSON carrying a base64 payload. The payload is stored under
// output_dir and its path returned.
class HttpImageGenClient final : public ImageGenClient {
 public:
  explicit HttpImageGenClient(EndpointConfig config) : config_(std::move(config)) {
    if (config_.output_dir.empty()) {
      config_.output_dir =
          (std::filesystem::temp_directory_path() / "sgkit-generated").string();
    }
  }

  Expected<std::string, ClientError> generate(const std::string& prompt) override {
    njson body = {{"prompt", prompt}};
    if (!config_.model.empty()) body["model"] = config_.model;
    std::string content_type;
    auto reply = post_json(config_, body.dump(), &content_type);
    if (!reply) return reply.error();

    std::string bytes;
    std::string extension = ".png";
    if (content_type.rfind("image/", 0) == 0) {
      bytes = std::move(*reply);
      if (content_type == "image/jpeg") extension = ".jpg";
    } else {
      njson doc = njson::parse(*reply, nullptr, false);
      if (doc.is_discarded()) return ClientError{"protocol", "image reply is not JSON"};
      std::string b64;
      if (doc.contains("image_b64") && doc.at("image_b64").is_string()) {
        b64 = doc.at("image_b64").get<std::string>();
      } else if (doc.contains("data") && doc.at("data").is_array() && !doc.at("data").empty() &&
                 doc.at("data").at(0).contains("b64_json")) {
        b64 = doc.at("data").at(0).at("b64_json").get<std::string>();
      } else {
        return ClientError{"protocol", "image reply lacks image_b64 / data[0].b64_json"};
      }
      auto decoded = base64_decode(b64);
      if (!decoded) return decoded.error();
      bytes = std::move(*decoded);
    }

    std::error_code ec;
    std::filesystem::create_directories(config_.output_dir, ec);
    std::string name = "gen_" + hex64(fnv1a64(prompt) ^ fnv1a64(bytes)) + extension;
    std::filesystem::path path = std::filesystem::path(config_.output_dir) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) return ClientError{"config", "cannot write " + path.string()};
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) return ClientError{"config", "write failure: " + path.string()};
    return path.string();
  }

 private:
  EndpointConfig config_;
};

// Embeddings protocol: {"model", "input"} -> data[0].embedding.
class HttpEmbeddingBackend final : public EmbeddingBackend {
 public:
  HttpEmbeddingBackend(EndpointConfig config, std::size_t dimension)
      : config_(std::move(config)), dimension_(dimension) {}

  std::size_t dimension() const override { return dimension_; }

  Vec embed(const std::string& text) const override {
    njson body = {{"model", config_.model}, {"input", text}};
    auto reply = post_json(config_, body.dump());
    if (!reply) throw std::runtime_error("embedding request failed: " + reply.error().message);
    njson doc = njson::parse(*reply, nullptr, false);
    if (doc.is_discarded() || !doc.contains("data") || !doc.at("data").is_array() ||
        doc.at("data").empty() || !doc.at("data").at(0).contains("embedding")) {
      throw std::runtime_error("embedding reply lacks data[0].embedding");
    }
    Vec v = doc.at("data").at(0).at("embedding").get<Vec>();
    if (v.size() != dimension_) {
      throw std::runtime_error("embedding dimension " + std::to_string(v.size()) +
                               " != configured " + std::to_string(dimension_));
    }
    return v;
  }

 private:
  EndpointConfig config_;
  std::size_t dimension_;
};

}  // namespace

std::unique_ptr<ChatClient> make_http_chat_client(EndpointConfig config) {
  return std::make_unique<HttpChatClient>(std::move(config));
}

std::unique_ptr<ImageGenClient> make_http_image_gen_client(EndpointConfig config) {
  return std::make_unique<HttpImageGenClient>(std::move(config));
}

std::unique_ptr<EmbeddingBackend> make_http_embedding_backend(EndpointConfig config,
                                                              std::size_t dimension) {
  return std::make_unique<HttpEmbeddingBackend>(std::move(config), dimension);
}

}  // namespace sgkit
