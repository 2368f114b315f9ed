/* Copyright 2026 The aqtune Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef AQ_LOG_HPP_
#define AQ_LOG_HPP_

#include <spdlog/spdlog.h>

namespace aq {

// Reads AQ_LOG (trace|debug|info|warn|error|off; default warn) and routes
// the default logger to standard error.
void init_logging();

}  // namespace aq

#endif  // AQ_LOG_HPP_
