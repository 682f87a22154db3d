#pragma once

// Contracts for the remote services the toolkit drives. Everything network-
// facing sits behind one of these interfaces so pipelines are mockable and
// provider-agnostic; the bundled implementations speak JSON-over-HTTP
// chat-completion / embedding / image-generation protocols.

#include <memory>
#include <string>

#include "sgkit/expected.hpp"

namespace sgkit {

struct ClientError {
  std::string code;  // "http", "protocol", "config"
  std::string message;
};

// Chat completion with one image attachment: (prompt, image reference) ->
// model text. The image reference is an http(s) URL or a local file path
// (sent inline as a base64 data URL).
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual Expected<std::string, ClientError> complete(const std::string& prompt,
                                                      const std::string& image_ref) = 0;
};

// Text-to-image: POST a prompt, receive an image payload. Implementations
// return a reference (local path) to the stored image.
class ImageGenClient {
 public:
  virtual ~ImageGenClient() = default;
  virtual Expected<std::string, ClientError> generate(const std::string& prompt) = 0;
};

struct EndpointConfig {
  std::string url;           // e.g. "http://host:port/v1/chat/completions"
  std::string model;         // model name passed through to the service
  std::string api_key_env;   // env var holding the bearer token; empty = none
  double temperature = 0.0;
  int timeout_sec = 120;
  std::string output_dir;    // image-gen only: where payloads are written
};

std::unique_ptr<ChatClient> make_http_chat_client(EndpointConfig config);
std::unique_ptr<ImageGenClient> make_http_image_gen_client(EndpointConfig config);

}  // namespace sgkit
