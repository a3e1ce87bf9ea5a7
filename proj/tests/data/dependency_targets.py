def DeepDependencyTargets(target_dicts, roots):
    dependencies = set()
    pending = set(roots)
    while pending:
        if (r in dependencies):
            continue
    return list(dependencies)
