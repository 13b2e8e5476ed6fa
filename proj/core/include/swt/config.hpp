/*
 * Copyright (c) 2026, the Swintormer authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <map>
#include <string>
#include <vector>

#include "swt/errors.hpp"

namespace swt {

/// Flat key=value settings mirroring the CLI flags. Unknown keys are
/// rejected; file values load first and flags override them; serializes
/// back to the same text form.
class RunConfig {
public:
    static const std::vector<std::string>& known_keys();

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get(const std::string& key, const std::string& fallback = "") const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_flag(const std::string& key) const;  // present and not "false"/"0"

    /// UTF-8 key=value lines; '#' starts a comment; blank lines ignored.
    void load_file(const std::string& path);

    std::string serialize() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace swt
