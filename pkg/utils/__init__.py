# Configuration, errors, scenario loading and artifact writing
