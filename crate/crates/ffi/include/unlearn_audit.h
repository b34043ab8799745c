#ifndef UNLEARN_AUDIT_H
#define UNLEARN_AUDIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum UaStatus {
  UA_STATUS_OK = 0,
  UA_STATUS_NULL_ARGUMENT = 1,
  UA_STATUS_INVALID_UTF8 = 2,
  UA_STATUS_CONFIG_INVALID = 3,
  UA_STATUS_IO = 4,
  UA_STATUS_PROTOCOL = 5,
  UA_STATUS_UNKNOWN_PRESET = 6,
  UA_STATUS_FAILED = 7,
  UA_STATUS_PANIC = 8,
} UaStatus;

// A data collector behind an opaque pointer.
typedef struct UaCollector UaCollector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ua_version(void);

// Message of the last failed call on this thread, or null. Valid until
// the next failing call on the same thread.
const char *ua_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` is null or a pointer obtained from this library and not yet freed.
void ua_string_free(char *s);

// Runs an experiment from TOML text and writes the JSON report to `*report_json`.
//
// # Safety
// `config_toml` is a valid NUL-terminated string; `report_json` is valid
// for one pointer write.
enum UaStatus ua_run_config(const char *config_toml, char **report_json);

// Runs a named preset and writes its criterion outcomes as JSON.
//
// # Safety
// `preset` is a valid NUL-terminated string; `outcomes_json` is valid for
// one pointer write.
enum UaStatus ua_reproduce(const char *preset, uint64_t seed, char **outcomes_json);

// Creates an honest collector that stores `capacity` records and honours
// `budget` deletions. `learner_json` is a learner table such as
// `{"kind":"decision_tree"}`.
//
// # Safety
// `learner_json` is a valid NUL-terminated string; `out` is valid for one
// pointer write.
enum UaStatus ua_collector_new(const char *learner_json,
                               size_t capacity,
                               size_t budget,
                               uint64_t seed,
                               struct UaCollector **out);

// Sends one request line and writes the reply line to `*reply`.
//
// # Safety
// `collector` comes from [`ua_collector_new`]; `request` is a valid
// NUL-terminated string; `reply` is valid for one pointer write.
enum UaStatus ua_collector_send(struct UaCollector *collector, const char *request, char **reply);

// Releases a collector. Null is ignored.
//
// # Safety
// `collector` is null or comes from [`ua_collector_new`] and is not yet freed.
void ua_collector_free(struct UaCollector *collector);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNLEARN_AUDIT_H */
