#include <stdio.h>
#include <string.h>
#include "unlearn_audit.h"

static int expect(int ok, const char *what) {
    if (!ok) {
        const char *err = ua_last_error();
        fprintf(stderr, "%s failed: %s\n", what, err ? err : "(no message)");
    }
    return ok ? 0 : 1;
}

int main(void) {
    int failures = 0;
    UaCollector *c = NULL;
    failures += expect(ua_collector_new("{\"kind\":\"ols\"}", 2, 1, 3, &c) == UA_STATUS_OK, "collector_new");

    const char *script[] = {
        "ADD {\"instance\":{\"dense\":[1.0]},\"label\":{\"real\":2.0}}",
        "ADD {\"instance\":{\"dense\":[2.0]},\"label\":{\"real\":4.0}}",
        "EVAL {\"dense\":[3.0]}",
    };
    char *reply = NULL;
    for (int i = 0; i < 3; i++) {
        failures += expect(ua_collector_send(c, script[i], &reply) == UA_STATUS_OK, script[i]);
        printf("%s\n", reply);
        if (i < 2) failures += expect(strcmp(reply, "ACK") == 0, "ack");
        else failures += expect(strncmp(reply, "PRED ", 5) == 0, "prediction");
        ua_string_free(reply);
    }
    failures += expect(ua_collector_send(c, "BOGUS", &reply) == UA_STATUS_PROTOCOL, "protocol error");
    ua_collector_free(c);

    char *outcomes = NULL;
    failures += expect(ua_reproduce("lemma44", 2022, &outcomes) == UA_STATUS_OK, "reproduce");
    failures += expect(strstr(outcomes, "\"pass\":true") != NULL, "lemma44 passes");
    ua_string_free(outcomes);
    failures += expect(ua_reproduce("nope", 1, &outcomes) == UA_STATUS_UNKNOWN_PRESET, "unknown preset");
    printf("version %s, %d failures\n", ua_version(), failures);
    return failures;
}
