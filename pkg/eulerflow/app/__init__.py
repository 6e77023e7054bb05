# eulerflow/app/__init__.py
