"""
Вычислительные сервисы: МКЭ, энергия, решатель состояния, сопряжённые
задачи, параметризация метками, оптимизатор, оценка устойчивости и
команды CLI. Модули импортируются напрямую (app.services.<модуль>).
"""
